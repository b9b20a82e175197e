#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "qmetro/tensor_algebra.hpp"

namespace qmetro {

struct InvalidChannel : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct RankInstability : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Kraus list K_i (d_out x d_in) with derivatives dK_i/dphi at the working point.
struct KrausChannel {
    std::vector<CMat> kraus;
    std::vector<CMat> dkraus;

    int din() const { return kraus.empty() ? 0 : static_cast<int>(kraus[0].cols()); }
    int dout() const { return kraus.empty() ? 0 : static_cast<int>(kraus[0].rows()); }
    double tp_residual() const;   // ||sum K^dag K - I||_F
    double dtp_residual() const;  // ||sum (dK^dag K + K^dag dK)||_F
    void validate(double tol = 1e-10, double dtol = 1e-8) const;
    // rho -> sum K rho K^dag
    CMat apply(const CMat& rho) const;
};

// Vectors |C_i> (columns) with C = sum |C_i><C_i| and their phi-derivatives.
struct FactorizedComb {
    Layout layout;
    CMat vectors;
    CMat dvectors;

    int rank() const { return static_cast<int>(vectors.cols()); }
    LabeledMatrix choi() const;
    LabeledMatrix dchoi() const;
};

// |K>> on (in, out): entry (i, o) = K(o, i)
CVec double_ket(const CMat& k);
CMat from_double_ket(const CVec& v, int din, int dout);

FactorizedComb choi_from_kraus(const KrausChannel& ch, const std::string& in = "in",
                               const std::string& out = "out");

// Tr_shared[(A^{T_shared} (x) I)(I (x) B)], result on A's free labels then B's free labels.
LabeledMatrix link_product(const LabeledMatrix& a, const LabeledMatrix& b);

struct IoPair {
    std::string in;   // empty label means a trivial (one-dimensional) space
    std::string out;
};

struct CombReport {
    double min_eigenvalue = 0;
    std::vector<double> residuals;  // tower residual per step, i = 1..N
    double trace_residual = 0;      // |Tr C - prod d_in|
    bool pass = false;
};

CombReport validate_comb(const LabeledMatrix& c, const std::vector<IoPair>& pairs,
                         double eig_tol = 1e-9, double res_tol = 1e-8);

// Vectors from C = U L U^dag on the support; derivatives solve dX C^dag + C dX^dag = dC.
FactorizedComb factorize(const LabeledMatrix& c, const LabeledMatrix& dc, double rank_tol = 1e-10);

// Central differences with one Richardson step.
CMat finite_difference(const std::function<CMat(double)>& f, double x, double h = 1e-5);

struct Purification {
    Layout layout;  // original layout followed by the future factor
    CVec vec;
};
Purification purify(const LabeledMatrix& rho, const std::string& future = "F",
                    double rank_tol = 1e-10);

}  // namespace qmetro
