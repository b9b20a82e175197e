#pragma once

#include <functional>
#include <vector>

#include "qmetro/comb_algebra.hpp"
#include "qmetro/strategy_synthesis.hpp"

namespace qmetro {

enum class DerivativeMethod { Analytic, FiniteDifference };

struct OracleReport {
    double j_sld = 0;
    CMat sld;
    double measurement_cfi = 0;  // CFI of the projective measurement in the SLD eigenbasis
    DerivativeMethod derivative_method = DerivativeMethod::Analytic;
    double trace_residual = 0;   // |Tr rho - 1|
    double drho_trace = 0;       // |Tr drho|
    double kernel_weight = 0;    // ||P_ker drho P_ker||
};

struct OutputState {
    CMat rho;
    CMat drho;  // analytic, from the comb derivative vectors
};

// sum_i (<conj C_i| (x) I_F) |P><P| (|conj C_i> (x) I_F)
OutputState output_state(const StrategyChoi& s, const FactorizedComb& fc);

// Lyapunov solution in the eigenbasis of rho, kernel components set to zero.
// Throws RankInstability when drho has weight on the kernel of rho.
OracleReport state_qfi_sld(const CMat& rho, const CMat& drho);

struct Outcome {
    double q;
    double dq;
};
struct CfiResult {
    double value = 0;
    bool divergent = false;  // an outcome with q -> 0 but dq != 0
};
CfiResult cfi(const std::vector<Outcome>& probs);

// Comb as a function of the parameter.
using CombFamily = std::function<FactorizedComb(double)>;

struct VerificationReport {
    double lambda = 0;
    double j_sld = 0;           // from the finite-difference derivative
    double j_analytic = 0;      // from the analytic comb derivative
    double rel_gap = 0;         // |J - lambda| / max(lambda, 1e-6)
    double fd_vs_analytic = 0;  // relative disagreement of the two derivatives
    OracleReport oracle;
};

// rho at phi, drho by central differences (delta, one Richardson step) and analytically.
VerificationReport verify_strategy(const StrategyChoi& s, const CombFamily& family, double phi, double lambda,
                                   double delta = 1e-5);

}  // namespace qmetro
