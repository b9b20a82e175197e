#include "qmetro/task_qfi.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>

namespace qmetro {

namespace {
CMat gauge_vectors(const FactorizedComb& fc, const CMat& h) {
    if (h.rows() != fc.rank() || h.cols() != fc.rank()) throw DimensionError("gauge must be r x r");
    return fc.dvectors - cplx(0, 1) * fc.vectors * h;
}
}  // namespace

LabeledMatrix performance_operator(const FactorizedComb& fc, const HermitianGauge& g) {
    CMat x = gauge_vectors(fc, g.h);
    CMat om = 4.0 * (x * x.adjoint()).transpose();
    return LabeledMatrix(fc.layout, herm(om));
}

CMat schur_block(double lambda, const FactorizedComb& fc, const HermitianGauge& g, const CMat& q) {
    const long r = fc.rank(), D = fc.layout.total_dim();
    if (q.rows() != D || q.cols() != D) throw DimensionError("Q must live on the comb layout");
    CMat b = gauge_vectors(fc, g.h).conjugate();
    CMat a(r + D, r + D);
    a.topLeftCorner(r, r) = CMat::Identity(r, r) * (lambda / 4.0);
    a.topRightCorner(r, D) = b.adjoint();
    a.bottomLeftCorner(D, r) = b;
    a.bottomRightCorner(D, D) = q;
    return a;
}

FactorizedComb product_comb(const std::vector<KrausChannel>& channels) {
    if (channels.empty()) throw std::invalid_argument("product comb needs at least one channel");
    FactorizedComb out;
    std::vector<Factor> f;
    out.vectors = CMat::Ones(1, 1);
    out.dvectors = CMat::Zero(1, 1);
    for (size_t k = 0; k < channels.size(); ++k) {
        const auto& ch = channels[k];
        auto single = choi_from_kraus(ch, "in", "out");
        f.push_back({slot(2 * static_cast<int>(k) + 1), ch.din()});
        f.push_back({slot(2 * static_cast<int>(k) + 2), ch.dout()});
        const long ra = out.vectors.cols(), rb = single.rank();
        const long da = out.vectors.rows(), db = single.vectors.rows();
        CMat v(da * db, ra * rb), dv(da * db, ra * rb);
        for (long a = 0; a < ra; ++a)
            for (long b = 0; b < rb; ++b) {
                v.col(a * rb + b) = kron(CVec(out.vectors.col(a)), CVec(single.vectors.col(b)));
                dv.col(a * rb + b) = kron(CVec(out.dvectors.col(a)), CVec(single.vectors.col(b))) +
                                     kron(CVec(out.vectors.col(a)), CVec(single.dvectors.col(b)));
            }
        out.vectors = v;
        out.dvectors = dv;
    }
    out.layout = Layout(f);
    return out;
}

FactorizedComb product_comb(const KrausChannel& ch, int N) {
    if (N < 1) throw std::invalid_argument("N must be positive");
    return product_comb(std::vector<KrausChannel>(N, ch));
}

CompressedComb compress_vectors(const FactorizedComb& fc, double tol) {
    Eigen::JacobiSVD<CMat> svd(fc.vectors, Eigen::ComputeFullV);
    const RVec& s = svd.singularValues();
    const double top = s.size() ? s(0) : 0.0;
    long k = 0;
    while (k < s.size() && s(k) > tol * std::max(top, 1e-300)) ++k;
    CompressedComb out;
    out.fc.layout = fc.layout;
    const long r = fc.rank();
    if (k == r) {
        out.fc = fc;
        out.frame = CMat::Identity(r, r);
        return out;
    }
    CMat V = svd.matrixV();
    if (k < r) {
        CMat rest = fc.dvectors * V.rightCols(r - k);
        if (rest.norm() > 1e-8 * std::max(1.0, fc.dvectors.norm()))
            throw RankInstability("a vanishing Kraus direction has a nonzero derivative; the rank is not locally constant");
    }
    out.frame = V.leftCols(std::max<long>(k, 1));
    out.fc.vectors = fc.vectors * out.frame;
    out.fc.dvectors = fc.dvectors * out.frame;
    return out;
}

FactorizedComb branch_vectors(const FactorizedComb& fc, const CoordinateSpace& cs) {
    if (!cs.reduced) return fc;
    FactorizedComb out;
    const long r = fc.rank();
    Layout lay;
    for (long i = 0; i < r; ++i) {
        CVec v = contract_links(CVec(fc.vectors.col(i)), fc.layout, cs.links, &lay);
        CVec dv = contract_links(CVec(fc.dvectors.col(i)), fc.layout, cs.links);
        if (i == 0) {
            out.vectors.resize(v.size(), r);
            out.dvectors.resize(v.size(), r);
        }
        out.vectors.col(i) = v;
        out.dvectors.col(i) = dv;
    }
    out.layout = lay;
    if (lay != cs.basis->layout()) throw DimensionError("reduced layout differs from the branch basis");
    return out;
}

QfiResult task_qfi(const FactorizedComb& fc_in, const StrategySetSpec& spec, const QfiOptions& opt) {
    if (fc_in.layout != spec.layout()) throw DimensionError("comb layout does not match the strategy set");
    if (fc_in.vectors.rows() != fc_in.layout.total_dim() || fc_in.dvectors.rows() != fc_in.vectors.rows() ||
        fc_in.dvectors.cols() != fc_in.vectors.cols())
        throw DimensionError("comb vectors have inconsistent shapes");
    CompressedComb cc = compress_vectors(fc_in, opt.rank_tol);
    const FactorizedComb& fc = cc.fc;
    const int r = fc.rank();

    QfiResult res;
    res.spec = spec;
    res.coords = dual_coordinates(spec);
    const int K = static_cast<int>(res.coords.size());

    std::vector<FactorizedComb> bv;
    for (const auto& cs : res.coords) bv.push_back(branch_vectors(fc, cs));

    auto hb = hermitian_basis(r);
    const int nh = r * r;
    SdpProblem p;
    int nv = 1 + nh;
    std::vector<int> qoff(K);
    for (int i = 0; i < K; ++i) {
        qoff[i] = nv;
        nv += static_cast<int>(res.coords[i].allowed.size());
    }
    p.num_vars = nv;
    p.c = RVec::Zero(nv);
    p.c(0) = 1.0;
    p.group.assign(nv, -1);
    for (int i = 0; i < K; ++i)
        for (size_t k = 0; k < res.coords[i].allowed.size(); ++k) p.group[qoff[i] + k] = i;

    double lambda0 = 1.0;
    for (int i = 0; i < K; ++i) {
        const auto& cs = res.coords[i];
        const long D = cs.basis->dim();
        const double c0 = cs.identity_coef;
        SdpBlock b;
        b.f0 = CMat::Zero(r + D, r + D);
        CMat B0 = bv[i].dvectors.conjugate();
        b.f0.bottomLeftCorner(D, r) = B0;
        b.f0.topRightCorner(r, D) = B0.adjoint();
        b.f0.bottomRightCorner(D, D) = CMat::Identity(D, D) * c0;
        CMat fl = CMat::Zero(r + D, r + D);
        fl.topLeftCorner(r, r) = CMat::Identity(r, r) / 4.0;
        b.dense.push_back({0, fl});
        CMat cconj = bv[i].vectors.conjugate();
        for (int j = 0; j < nh; ++j) {
            CMat bj = cplx(0, 1) * cconj * hb[j].conjugate();
            CMat f = CMat::Zero(r + D, r + D);
            f.bottomLeftCorner(D, r) = bj;
            f.topRightCorner(r, D) = bj.adjoint();
            b.dense.push_back({1 + j, f});
        }
        SdpBlock::BasisTerms bt;
        bt.basis = cs.basis;
        bt.offset = r;
        bt.strings = cs.allowed;
        for (size_t k = 0; k < cs.allowed.size(); ++k) bt.vars.push_back(qoff[i] + static_cast<int>(k));
        b.basis_terms.push_back(bt);
        p.blocks.push_back(std::move(b));
        p.block_group.push_back(i);
        const double bn = B0.norm();
        lambda0 = std::max(lambda0, 8.0 * bn * bn / c0 + 1.0);
    }

    // strictly feasible primal start and an exactly feasible dual start
    RVec x0 = RVec::Zero(nv);
    x0(0) = lambda0;
    p.x0 = x0;
    std::vector<CMat> z0;
    const double z1 = 4.0 / (static_cast<double>(r) * K);
    for (int i = 0; i < K; ++i) {
        const long D = res.coords[i].basis->dim();
        const double z2 = z1 * (lambda0 / 4.0) / res.coords[i].identity_coef;
        CMat z = CMat::Zero(r + D, r + D);
        z.topLeftCorner(r, r) = CMat::Identity(r, r) * z1;
        z.bottomRightCorner(D, D) = CMat::Identity(D, D) * z2;
        z0.push_back(z);
    }
    p.z0 = z0;

    SdpSolution sol = solve(p, opt.sdp);
    res.status = sol.status;
    res.iterations = sol.iterations;
    res.rel_gap = sol.rel_gap;
    res.value = sol.primal;
    RVec hx = sol.x.segment(1, nh);
    CMat hk = hermitian_from_coordinates(hx, r);
    res.h_opt.h = herm(cc.frame * hk * cc.frame.adjoint());
    res.certificate_min_eig = std::numeric_limits<double>::infinity();
    for (int i = 0; i < K; ++i) {
        const auto& cs = res.coords[i];
        RVec q = sol.x.segment(qoff[i], static_cast<long>(cs.allowed.size()));
        res.q_opt.push_back(cs.element(q));
        const long D = cs.basis->dim();
        res.dual_blocks.push_back(sol.Z[i].bottomRightCorner(D, D));
        CMat om = performance_operator(bv[i], HermitianGauge{hk}).mat();
        res.certificate_min_eig = std::min(res.certificate_min_eig, min_eig(herm(res.value * res.q_opt.back() - om)));
    }
    return res;
}

}  // namespace qmetro
