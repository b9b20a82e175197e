#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "qmetro/comb_algebra.hpp"
#include "qmetro/task_qfi.hpp"

namespace qmetro {

struct SynthesisFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// How the strategy was obtained.
//  SaddleProgram: maximize Tr(P~ Omega) over the primal space under the saddle equalities.
//  DualBlock: P~ read off the lower-right blocks of the optimal dual LMI variables of the
//  QFI program. It satisfies the same constraints without a second solve, and keeps working
//  when the saddle equalities leave the program with no interior point.
enum class SynthesisRoute { Auto, SaddleProgram, DualBlock };
std::string to_string(SynthesisRoute r);

struct StrategyBranch {
    std::vector<int> perm;
    double weight = 0;  // q^pi
    CMat op;            // P^pi on H_1..H_2N, trace prod d_even
};

struct StrategyChoi {
    StrategySetSpec spec;
    LabeledMatrix marginal;               // P~ on H_1..H_2N
    std::vector<StrategyBranch> branches; // SWI and Sup only
    bool purified = false;
    Layout purification_layout;           // H_1..H_2N, then the future factors
    CVec purification;
    double objective = 0;                 // Tr(P~ Omega(gauge)), the QFI this strategy reaches
    SdpStatus status = SdpStatus::NumericalLimit;
    int iterations = 0;
    SynthesisRoute route = SynthesisRoute::SaddleProgram;
    // Gauge at which the saddle condition holds for this P~: the minimizer of
    // Tr(P~ Omega(h)) over h, started from h_opt. The QFI program fixes h_opt only to
    // about the square root of its gap because the objective is quadratic in h.
    HermitianGauge gauge;

    std::vector<std::string> future_labels() const;
};

struct SynthesisOptions {
    SdpOptions sdp{1e-10, 1e-9, 200, 0.98, 1e10, false};
    double objective_rel_tol = 1e-5;
    bool purify = true;
    SynthesisRoute route = SynthesisRoute::Auto;
    // Auto takes the first route whose output meets both of these, else the candidate
    // with the smallest saddle residual
    double saddle_tol = 1e-6;
    double membership_tol = 1e-8;
};

// A strategy reaching lambda = Tr(P~ Omega(h_opt)) over the primal space with the saddle
// condition C^dag P~^T (dC - i C h_opt) Hermitian. Auto tries DualBlock, then SaddleProgram.
// Throws SynthesisFailure when no route reaches lambda.
StrategyChoi optimal_strategy(const FactorizedComb& fc, const StrategySetSpec& spec, const QfiResult& result,
                              const SynthesisOptions& opt = {});

// Solves the saddle condition for h with P fixed (a Lyapunov equation in A = C^dag P^T C).
// Directions in the kernel of A keep the value of `start`.
HermitianGauge refine_gauge(const CMat& p, const FactorizedComb& fc, const HermitianGauge& start);

// || M - M^dag ||_F with M = C^dag P^T (dC - i C h)
double saddle_residual(const CMat& p, const FactorizedComb& fc, const HermitianGauge& g);

// Largest violation of the primal-space constraints (branch towers for SWI/Sup included).
double membership_residual(const StrategyChoi& s);

StrategyChoi purify_strategy(const StrategyChoi& s);

// Isometries V^(k): H_{in_k} (x) H_{A_{k-1}} -> H_{out_k} (x) H_{A_k}, with dim A_0 = 1.
struct IsometrySequence {
    std::vector<IoPair> pairs;
    std::vector<int> din, dout;     // per tooth, 1 for an empty label
    std::vector<int> ancilla;       // dim A_k, k = 1..n
    std::vector<CMat> isometries;   // rows (out, A_k), cols (in, A_{k-1})
};

IsometrySequence comb_to_isometries(const LabeledMatrix& c, const std::vector<IoPair>& pairs,
                                    double rank_tol = 1e-10);
// Choi on the labels in tooth order, final ancilla traced out.
LabeledMatrix isometries_to_comb(const IsometrySequence& seq);

// Teeth of a sequential strategy in the order perm, finishing on the future factor "F".
std::vector<IoPair> strategy_teeth(const std::vector<int>& perm, const std::string& future = "F");

void write_strategy_json(const StrategyChoi& s, std::ostream& os,
                         const std::vector<IsometrySequence>& isometries = {});
StrategyChoi read_strategy_json(std::istream& is);

}  // namespace qmetro
