#include "qmetro/qfi_oracle.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <limits>

namespace qmetro {

namespace {

// purification as a D x f matrix, process factors first
Eigen::Map<const Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> purification_matrix(
    const StrategyChoi& s, long D) {
    const long f = s.purification.size() / D;
    return {s.purification.data(), D, f};
}

void check_layout(const StrategyChoi& s, const FactorizedComb& fc) {
    if (!s.purified) throw std::invalid_argument("strategy has no purification");
    if (fc.layout != s.marginal.layout()) throw DimensionError("comb and strategy layouts differ");
    const Layout& pl = s.purification_layout;
    for (int k = 0; k < fc.layout.size(); ++k)
        if (pl.factors()[k].label != fc.layout.factors()[k].label || pl.factors()[k].dim != fc.layout.factors()[k].dim)
            throw DimensionError("purification must start with the process factors");
}

CMat state_only(const StrategyChoi& s, const CMat& vectors) {
    const long D = vectors.rows();
    auto pm = purification_matrix(s, D);
    CMat psi = pm.transpose() * vectors;  // f x r
    return psi * psi.adjoint();
}

}  // namespace

OutputState output_state(const StrategyChoi& s, const FactorizedComb& fc) {
    check_layout(s, fc);
    const long D = fc.layout.total_dim();
    auto pm = purification_matrix(s, D);
    CMat psi = pm.transpose() * fc.vectors;
    CMat dpsi = pm.transpose() * fc.dvectors;
    OutputState out;
    out.rho = herm(psi * psi.adjoint());
    CMat t = dpsi * psi.adjoint();
    out.drho = t + t.adjoint();
    return out;
}

OracleReport state_qfi_sld(const CMat& rho, const CMat& drho) {
    if (rho.rows() != rho.cols() || drho.rows() != rho.rows() || drho.cols() != rho.cols())
        throw DimensionError("state and derivative must be square of equal size");
    OracleReport rep;
    rep.trace_residual = std::abs(rho.trace() - 1.0);
    rep.drho_trace = std::abs(drho.trace());
    Eigen::SelfAdjointEigenSolver<CMat> es(herm(rho));
    const RVec& l = es.eigenvalues();
    const CMat& U = es.eigenvectors();
    const long n = l.size();
    CMat dr = U.adjoint() * herm(drho) * U;
    CMat L = CMat::Zero(n, n);
    const double scale = std::max(1.0, dr.norm());
    double kern = 0;
    for (long j = 0; j < n; ++j)
        for (long k = 0; k < n; ++k) {
            const double s = l(j) + l(k);
            if (s > 1e-12) L(j, k) = 2.0 * dr(j, k) / s;
            else kern += std::norm(dr(j, k));
        }
    rep.kernel_weight = std::sqrt(kern);
    if (rep.kernel_weight > 1e-6 * scale)
        throw RankInstability("derivative has weight on the kernel of the state; the QFI is discontinuous here");
    CMat Lfull = U * L * U.adjoint();
    rep.sld = herm(Lfull);
    rep.j_sld = (herm(rho) * rep.sld * rep.sld).trace().real();

    Eigen::SelfAdjointEigenSolver<CMat> el(rep.sld);
    std::vector<Outcome> probs;
    for (long j = 0; j < n; ++j) {
        CVec v = el.eigenvectors().col(j);
        probs.push_back({(v.adjoint() * rho * v)(0, 0).real(), (v.adjoint() * drho * v)(0, 0).real()});
    }
    rep.measurement_cfi = cfi(probs).value;
    return rep;
}

CfiResult cfi(const std::vector<Outcome>& probs) {
    CfiResult r;
    for (const auto& o : probs) {
        if (o.q <= 1e-12) {
            if (std::abs(o.dq) > 1e-10) {
                r.divergent = true;
                r.value = std::numeric_limits<double>::infinity();
                return r;
            }
            continue;
        }
        r.value += o.dq * o.dq / o.q;
    }
    return r;
}

VerificationReport verify_strategy(const StrategyChoi& s, const CombFamily& family, double phi, double lambda,
                                   double delta) {
    FactorizedComb c0 = family(phi);
    check_layout(s, c0);
    OutputState st = output_state(s, c0);
    auto diff = [&](double h) {
        return CMat((state_only(s, family(phi + h).vectors) - state_only(s, family(phi - h).vectors)) / (2 * h));
    };
    CMat fd = (4.0 * diff(delta / 2) - diff(delta)) / 3.0;
    VerificationReport rep;
    rep.lambda = lambda;
    rep.oracle = state_qfi_sld(st.rho, herm(fd));
    rep.oracle.derivative_method = DerivativeMethod::FiniteDifference;
    rep.j_sld = rep.oracle.j_sld;
    rep.j_analytic = state_qfi_sld(st.rho, st.drho).j_sld;
    rep.fd_vs_analytic = (fd - st.drho).norm() / std::max(st.drho.norm(), 1e-12);
    rep.rel_gap = std::abs(rep.j_sld - lambda) / std::max(lambda, 1e-6);
    return rep;
}

}  // namespace qmetro
