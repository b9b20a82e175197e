#include "qmetro/metrology_zoo.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

namespace qmetro {

namespace {

CMat pauli_x() {
    CMat m = CMat::Zero(2, 2);
    m(0, 1) = m(1, 0) = 1;
    return m;
}
CMat pauli_y() {
    CMat m = CMat::Zero(2, 2);
    m(0, 1) = cplx(0, -1);
    m(1, 0) = cplx(0, 1);
    return m;
}
CMat pauli_z() {
    CMat m = CMat::Zero(2, 2);
    m(0, 0) = 1;
    m(1, 1) = -1;
    return m;
}

void check_probability(double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("noise probability must lie in [0, 1]");
}

// exp(-i theta P / 2) for a Pauli P, and d/dtheta
KrausChannel pauli_rotation(const CMat& P, double theta, double rate) {
    CMat u = std::cos(theta / 2) * CMat::Identity(2, 2) - cplx(0, 1) * std::sin(theta / 2) * P;
    KrausChannel ch;
    ch.kraus = {u};
    ch.dkraus = {CMat(-cplx(0, 0.5 * rate) * P * u)};
    return ch;
}

KrausChannel with_zero_derivative(std::vector<CMat> ks) {
    KrausChannel ch;
    for (auto& k : ks) ch.dkraus.push_back(CMat::Zero(k.rows(), k.cols()));
    ch.kraus = std::move(ks);
    return ch;
}

}  // namespace

KrausChannel rz(double phi) { return pauli_rotation(pauli_z(), phi, 1.0); }
KrausChannel rx(double phi) { return pauli_rotation(pauli_x(), phi, 1.0); }
KrausChannel uz(double omega, double t) { return pauli_rotation(pauli_z(), omega * t, t); }

KrausChannel identity_channel(int d) { return with_zero_derivative({CMat::Identity(d, d)}); }

KrausChannel amplitude_damping(double p) {
    check_probability(p);
    CMat k1 = CMat::Zero(2, 2), k2 = CMat::Zero(2, 2);
    k1(0, 0) = 1;
    k1(1, 1) = std::sqrt(1 - p);
    k2(0, 1) = std::sqrt(p);
    return with_zero_derivative({k1, k2});
}

KrausChannel bit_flip(double p) {
    check_probability(p);
    return with_zero_derivative({CMat(std::sqrt(1 - p) * CMat::Identity(2, 2)), CMat(std::sqrt(p) * pauli_x())});
}

KrausChannel phase_flip(double p) {
    check_probability(p);
    return with_zero_derivative({CMat(std::sqrt(1 - p) * CMat::Identity(2, 2)), CMat(std::sqrt(p) * pauli_z())});
}

KrausChannel nmr_relaxation(double t, double T1, double T2, double a0) {
    if (t < 0) throw std::invalid_argument("relaxation time must be non-negative");
    if (!(T1 > 0 && T2 > 0)) throw std::invalid_argument("T1 and T2 must be positive");
    check_probability(a0);
    const double e1 = std::exp(-t / T1);
    const double alpha = (1 - a0) * e1 + a0;
    const double beta = a0 * e1 + 1 - a0;
    const double gamma = 2 * std::exp(-t / T2);
    const double s = std::hypot(gamma, alpha - beta);
    const double x3 = alpha - beta - s, x4 = alpha - beta + s;
    // unit directions of (x3, gamma) and (x4, gamma); they are orthogonal
    double u3[2], u4[2];
    if (gamma < 1e-12 && std::abs(alpha - beta) < 1e-12) {
        u3[0] = 0, u3[1] = 1;
        u4[0] = 1, u4[1] = 0;
    } else if (x4 >= std::abs(x3)) {
        const double n = std::hypot(x4, gamma);
        u4[0] = x4 / n, u4[1] = gamma / n;
        u3[0] = -gamma / n, u3[1] = x4 / n;
    } else {
        const double n = std::hypot(x3, gamma);
        u3[0] = x3 / n, u3[1] = gamma / n;
        u4[0] = gamma / n, u4[1] = -x3 / n;
    }
    const double c3 = std::sqrt(std::max(0.0, (alpha + beta - s) / 2));
    const double c4 = std::sqrt(std::max(0.0, (alpha + beta + s) / 2));
    CMat k1 = CMat::Zero(2, 2), k2 = CMat::Zero(2, 2), k3 = CMat::Zero(2, 2), k4 = CMat::Zero(2, 2);
    k1(1, 0) = std::sqrt(std::max(0.0, 1 - alpha));
    k2(0, 1) = std::sqrt(std::max(0.0, 1 - beta));
    k3(0, 0) = c3 * u3[0];
    k3(1, 1) = c3 * u3[1];
    k4(0, 0) = c4 * u4[0];
    k4(1, 1) = c4 * u4[1];
    return with_zero_derivative({k1, k2, k3, k4});
}

KrausChannel compose(const KrausChannel& signal, const KrausChannel& noise, CompositionOrder order) {
    const KrausChannel& second = order == CompositionOrder::SignalAfterNoise ? signal : noise;
    const KrausChannel& first = order == CompositionOrder::SignalAfterNoise ? noise : signal;
    if (second.din() != first.dout()) throw DimensionError("composed channels have incompatible dimensions");
    auto deriv = [](const KrausChannel& c, size_t i) {
        return c.dkraus.empty() ? CMat(CMat::Zero(c.kraus[i].rows(), c.kraus[i].cols())) : c.dkraus[i];
    };
    KrausChannel out;
    for (size_t a = 0; a < second.kraus.size(); ++a)
        for (size_t b = 0; b < first.kraus.size(); ++b) {
            out.kraus.push_back(second.kraus[a] * first.kraus[b]);
            out.dkraus.push_back(deriv(second, a) * first.kraus[b] + second.kraus[a] * deriv(first, b));
        }
    out.validate();
    return out;
}

FactorizedComb nonidentical_pair(double p1, double p2, double phi) {
    return product_comb({compose(rz(phi), amplitude_damping(p1)), compose(rz(phi), amplitude_damping(p2))});
}

ExpmWithDerivative expm_derivative(const CMat& h, const CMat& dh, double tau) {
    Eigen::SelfAdjointEigenSolver<CMat> es(herm(h));
    const RVec& l = es.eigenvalues();
    const CMat& V = es.eigenvectors();
    const long n = l.size();
    CVec f(n);
    for (long j = 0; j < n; ++j) f(j) = std::exp(cplx(0, -l(j) * tau));
    CMat g = V.adjoint() * dh * V;
    for (long j = 0; j < n; ++j)
        for (long k = 0; k < n; ++k) {
            const double d = l(j) - l(k);
            cplx dd = std::abs(d) > 1e-9 ? (f(j) - f(k)) / d : cplx(0, -tau) * f(j);
            g(j, k) *= dd;
        }
    ExpmWithDerivative out;
    out.u = V * f.asDiagonal() * V.adjoint();
    out.du = V * g * V.adjoint();
    return out;
}

FactorizedComb nonmarkovian_swap_comb(double phi, double g, double t, bool markovian) {
    const CMat I2 = CMat::Identity(2, 2);
    CMat H = phi * kron(pauli_z(), I2) +
             g * (kron(pauli_x(), pauli_x()) + kron(pauli_y(), pauli_y()) + kron(pauli_z(), pauli_z()));
    CMat dH = kron(pauli_z(), I2);
    auto e = expm_derivative(H, dH, t / 2);
    // U[(o, m), (i, e)] on system (x) environment
    auto amp = [](const CMat& u, int o, int m, int i, int en) { return u(o * 2 + m, i * 2 + en); };
    if (markovian) {
        KrausChannel ch;
        for (int en = 0; en < 2; ++en) {
            CMat k(2, 2), dk(2, 2);
            for (int o = 0; o < 2; ++o)
                for (int i = 0; i < 2; ++i) {
                    k(o, i) = amp(e.u, o, en, i, 0);
                    dk(o, i) = amp(e.du, o, en, i, 0);
                }
            ch.kraus.push_back(k);
            ch.dkraus.push_back(dk);
        }
        return product_comb(ch, 2);
    }
    FactorizedComb fc;
    fc.layout = process_layout({2, 2, 2, 2});
    fc.vectors = CMat::Zero(16, 2);
    fc.dvectors = CMat::Zero(16, 2);
    for (int en = 0; en < 2; ++en)
        for (int i1 = 0; i1 < 2; ++i1)
            for (int o2 = 0; o2 < 2; ++o2)
                for (int i3 = 0; i3 < 2; ++i3)
                    for (int o4 = 0; o4 < 2; ++o4) {
                        cplx v = 0, dv = 0;
                        for (int m = 0; m < 2; ++m) {
                            const cplx a = amp(e.u, o2, m, i1, 0), b = amp(e.u, o4, en, i3, m);
                            v += a * b;
                            dv += amp(e.du, o2, m, i1, 0) * b + a * amp(e.du, o4, en, i3, m);
                        }
                        const long idx = ((i1 * 2 + o2) * 2 + i3) * 2 + o4;
                        fc.vectors(idx, en) = v;
                        fc.dvectors(idx, en) = dv;
                    }
    return fc;
}

QfiResult control_free(const FactorizedComb& fc, const QfiOptions& opt) {
    if (fc.layout.size() != 4) throw DimensionError("control-free strategies need a two-step comb");
    std::vector<int> dims;
    for (const auto& f : fc.layout.factors()) dims.push_back(f.dim);
    if (dims[1] != dims[2]) throw DimensionError("the identity wire needs matching middle dimensions");
    StrategySetSpec spec;
    spec.kind = SetKind::SWI;
    spec.N = 2;
    spec.dims = dims;
    spec.perms = {{1, 2}};
    return task_qfi(fc, spec, opt);
}

double control_free_qfi(const FactorizedComb& fc, const QfiOptions& opt) {
    auto r = control_free(fc, opt);
    if (!r.ok()) throw std::runtime_error("control-free QFI: solver did not converge (" + to_string(r.status) + ")");
    return r.value;
}

}  // namespace qmetro
