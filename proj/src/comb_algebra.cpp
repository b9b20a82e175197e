#include "qmetro/comb_algebra.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

namespace qmetro {

double KrausChannel::tp_residual() const {
    if (kraus.empty()) return 1.0;
    CMat s = CMat::Zero(din(), din());
    for (const auto& k : kraus) s += k.adjoint() * k;
    return (s - CMat::Identity(din(), din())).norm();
}

double KrausChannel::dtp_residual() const {
    if (dkraus.empty()) return 0.0;
    CMat s = CMat::Zero(din(), din());
    for (size_t i = 0; i < kraus.size(); ++i)
        s += dkraus[i].adjoint() * kraus[i] + kraus[i].adjoint() * dkraus[i];
    return s.norm();
}

void KrausChannel::validate(double tol, double dtol) const {
    if (kraus.empty()) throw InvalidChannel("channel without Kraus operators");
    if (!dkraus.empty() && dkraus.size() != kraus.size())
        throw InvalidChannel("derivative list length differs from Kraus list");
    for (size_t i = 0; i < kraus.size(); ++i) {
        if (kraus[i].rows() != dout() || kraus[i].cols() != din())
            throw InvalidChannel("Kraus operators of inconsistent shape");
        if (!dkraus.empty() && (dkraus[i].rows() != dout() || dkraus[i].cols() != din()))
            throw InvalidChannel("Kraus derivative of inconsistent shape");
    }
    if (tp_residual() > tol) throw InvalidChannel("channel is not trace preserving");
    if (dtp_residual() > dtol) throw InvalidChannel("derivative breaks trace preservation");
}

CMat KrausChannel::apply(const CMat& rho) const {
    CMat out = CMat::Zero(dout(), dout());
    for (const auto& k : kraus) out += k * rho * k.adjoint();
    return out;
}

LabeledMatrix FactorizedComb::choi() const {
    return LabeledMatrix(layout, vectors * vectors.adjoint());
}

LabeledMatrix FactorizedComb::dchoi() const {
    CMat d = dvectors * vectors.adjoint();
    return LabeledMatrix(layout, d + d.adjoint());
}

CVec double_ket(const CMat& k) {
    const long din = k.cols(), dout = k.rows();
    CVec v(din * dout);
    for (long i = 0; i < din; ++i)
        for (long o = 0; o < dout; ++o) v(i * dout + o) = k(o, i);
    return v;
}

CMat from_double_ket(const CVec& v, int din, int dout) {
    CMat k(dout, din);
    for (int i = 0; i < din; ++i)
        for (int o = 0; o < dout; ++o) k(o, i) = v(static_cast<long>(i) * dout + o);
    return k;
}

FactorizedComb choi_from_kraus(const KrausChannel& ch, const std::string& in,
                               const std::string& out) {
    ch.validate();
    FactorizedComb fc;
    fc.layout = Layout({{in, ch.din()}, {out, ch.dout()}});
    const long D = fc.layout.total_dim();
    const long r = static_cast<long>(ch.kraus.size());
    fc.vectors.resize(D, r);
    fc.dvectors = CMat::Zero(D, r);
    for (long i = 0; i < r; ++i) {
        fc.vectors.col(i) = double_ket(ch.kraus[i]);
        if (!ch.dkraus.empty()) fc.dvectors.col(i) = double_ket(ch.dkraus[i]);
    }
    return fc;
}

LabeledMatrix link_product(const LabeledMatrix& a, const LabeledMatrix& b) {
    std::vector<std::string> shared, afree, bfree;
    for (const auto& l : a.layout().labels()) {
        if (b.layout().has(l)) {
            if (a.layout().dim(l) != b.layout().dim(l))
                throw DimensionError("link product: dimension mismatch on '" + l + "'");
            shared.push_back(l);
        } else {
            afree.push_back(l);
        }
    }
    for (const auto& l : b.layout().labels())
        if (!a.layout().has(l)) bfree.push_back(l);

    std::vector<std::string> ao = afree, bo = shared;
    ao.insert(ao.end(), shared.begin(), shared.end());
    bo.insert(bo.end(), bfree.begin(), bfree.end());
    CMat A = reorder(a, ao).mat();
    CMat B = reorder(b, bo).mat();
    const long Da = a.layout().subset(afree).total_dim();
    const long Ds = a.layout().subset(shared).total_dim();
    const long Db = b.layout().subset(bfree).total_dim();

    // At[(x,x'),(s',s)] = A[(x,s'),(x',s)];  Bt[(s',s),(y,y')] = B[(s',y),(s,y')]
    CMat At(Da * Da, Ds * Ds), Bt(Ds * Ds, Db * Db);
    for (long x = 0; x < Da; ++x)
        for (long xp = 0; xp < Da; ++xp)
            for (long sp = 0; sp < Ds; ++sp)
                for (long s = 0; s < Ds; ++s) At(x * Da + xp, sp * Ds + s) = A(x * Ds + sp, xp * Ds + s);
    for (long sp = 0; sp < Ds; ++sp)
        for (long s = 0; s < Ds; ++s)
            for (long y = 0; y < Db; ++y)
                for (long yp = 0; yp < Db; ++yp) Bt(sp * Ds + s, y * Db + yp) = B(sp * Db + y, s * Db + yp);
    CMat Rt = At * Bt;
    CMat R(Da * Db, Da * Db);
    for (long x = 0; x < Da; ++x)
        for (long xp = 0; xp < Da; ++xp)
            for (long y = 0; y < Db; ++y)
                for (long yp = 0; yp < Db; ++yp) R(x * Db + y, xp * Db + yp) = Rt(x * Da + xp, y * Db + yp);
    Layout lay = a.layout().subset(afree).concat(b.layout().subset(bfree));
    return LabeledMatrix(lay, R);
}

CombReport validate_comb(const LabeledMatrix& c, const std::vector<IoPair>& pairs, double eig_tol,
                         double res_tol) {
    CombReport rep;
    rep.min_eigenvalue = min_eig(c.mat());
    const int N = static_cast<int>(pairs.size());
    double din = 1;
    for (const auto& p : pairs)
        if (!p.in.empty()) din *= c.layout().dim(p.in);
    rep.trace_residual = std::abs(c.mat().trace().real() - din);
    bool ok = rep.min_eigenvalue >= -eig_tol && rep.trace_residual <= res_tol * std::max(1.0, din);
    for (int i = 0; i < N; ++i) {
        std::vector<std::string> later;
        if (!pairs[i].out.empty()) later.push_back(pairs[i].out);
        for (int j = i + 1; j < N; ++j) {
            if (!pairs[j].in.empty()) later.push_back(pairs[j].in);
            if (!pairs[j].out.empty()) later.push_back(pairs[j].out);
        }
        double r = 0;
        if (!pairs[i].in.empty()) {
            auto with_in = later;
            with_in.push_back(pairs[i].in);
            r = (neutralize(c.mat(), c.layout(), with_in) - neutralize(c.mat(), c.layout(), later)).norm();
        }
        rep.residuals.push_back(r);
        if (r > res_tol) ok = false;
    }
    rep.pass = ok;
    return rep;
}

FactorizedComb factorize(const LabeledMatrix& c, const LabeledMatrix& dc, double rank_tol) {
    if (c.layout() != dc.layout()) throw DimensionError("factorize: layouts differ");
    Eigen::SelfAdjointEigenSolver<CMat> es(herm(c.mat()));
    const RVec& ev = es.eigenvalues();
    const long D = ev.size();
    const double top = std::max(ev(D - 1), 0.0);
    if (ev(0) < -1e-9 * std::max(1.0, top)) throw std::invalid_argument("factorize: operator is not PSD");
    std::vector<long> sup, ker;
    for (long k = D - 1; k >= 0; --k) (ev(k) > rank_tol * top ? sup : ker).push_back(k);
    const long r = static_cast<long>(sup.size());
    CMat Ur(D, r), Uk(D, static_cast<long>(ker.size()));
    RVec s(r);
    for (long j = 0; j < r; ++j) {
        Ur.col(j) = es.eigenvectors().col(sup[j]);
        s(j) = std::sqrt(ev(sup[j]));
    }
    for (size_t j = 0; j < ker.size(); ++j) Uk.col(j) = es.eigenvectors().col(ker[j]);

    const CMat dC = herm(dc.mat());
    if (Uk.cols() > 0) {
        double kk = (Uk.adjoint() * dC * Uk).norm();
        if (kk > 1e-7 * std::max(1.0, dC.norm()))
            throw RankInstability("derivative has weight on the kernel; the rank is not locally constant");
    }
    FactorizedComb fc;
    fc.layout = c.layout();
    fc.vectors = Ur * s.asDiagonal();
    CMat Crr = Ur.adjoint() * dC * Ur;
    CMat A(r, r);
    for (long i = 0; i < r; ++i)
        for (long j = 0; j < r; ++j) A(i, j) = Crr(i, j) / (s(i) + s(j));
    fc.dvectors = Ur * A;
    if (Uk.cols() > 0) {
        RVec sinv = s.cwiseInverse();
        fc.dvectors += Uk * (Uk.adjoint() * dC * Ur) * sinv.asDiagonal();
    }
    return fc;
}

CMat finite_difference(const std::function<CMat(double)>& f, double x, double h) {
    auto central = [&](double step) { return ((f(x + step) - f(x - step)) / (2 * step)).eval(); };
    CMat d1 = central(h), d2 = central(h / 2);
    return (4.0 * d2 - d1) / 3.0;
}

Purification purify(const LabeledMatrix& rho, const std::string& future, double rank_tol) {
    Eigen::SelfAdjointEigenSolver<CMat> es(herm(rho.mat()));
    const RVec& ev = es.eigenvalues();
    const long D = ev.size();
    const double top = std::max(ev(D - 1), 0.0);
    if (ev(0) < -1e-9 * std::max(1.0, top)) throw std::invalid_argument("purify: operator is not PSD");
    std::vector<long> sup;
    for (long k = D - 1; k >= 0; --k)
        if (ev(k) > rank_tol * top) sup.push_back(k);
    const long f = std::max<long>(1, static_cast<long>(sup.size()));
    Purification p;
    p.layout = rho.layout().concat(Layout({{future, static_cast<int>(f)}}));
    p.vec = CVec::Zero(D * f);
    for (size_t j = 0; j < sup.size(); ++j) {
        CVec u = es.eigenvectors().col(sup[j]) * std::sqrt(ev(sup[j]));
        for (long i = 0; i < D; ++i) p.vec(i * f + static_cast<long>(j)) = u(i);
    }
    return p;
}

}  // namespace qmetro
