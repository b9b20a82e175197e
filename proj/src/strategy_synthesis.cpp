#include "qmetro/strategy_synthesis.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

#include "json.hpp"

namespace qmetro {

namespace {

using nlohmann::json;

// X_jk - X_kj^dag with X_jk = b_k c_j^dag, for j <= k
struct SaddleRows {
    std::vector<CMat> y;
    std::vector<bool> diagonal;
};

SaddleRows saddle_matrices(const FactorizedComb& fc, const CMat& h) {
    const long r = fc.rank();
    CMat b = fc.dvectors - cplx(0, 1) * fc.vectors * h;
    SaddleRows out;
    for (long j = 0; j < r; ++j)
        for (long k = j; k < r; ++k) {
            CMat xjk = b.col(k) * fc.vectors.col(j).adjoint();
            CMat xkj = b.col(j) * fc.vectors.col(k).adjoint();
            out.y.push_back(xjk - xkj.adjoint());
            out.diagonal.push_back(j == k);
        }
    return out;
}

// one synthesis variable: coefficient of basis string `s` in branch `branch`
struct VarRef {
    int branch;
    long s;
};

CMat lifted(const StrategySetSpec& spec, const CoordinateSpace& cs, const CMat& x) {
    return cs.reduced ? switch_branch_operator(spec, cs.branch, x) : x;
}

}  // namespace

std::vector<std::string> StrategyChoi::future_labels() const {
    std::vector<std::string> out;
    if (!purified) return out;
    for (const auto& f : purification_layout.factors())
        if (!marginal.layout().has(f.label)) out.push_back(f.label);
    return out;
}

HermitianGauge refine_gauge(const CMat& p, const FactorizedComb& fc, const HermitianGauge& start) {
    // M(h) = G - i A h with A = C^dag P^T C; M Hermitian  <=>  A h + h A = -i (G - G^dag)
    const CMat pt = p.transpose();
    const CMat a = herm(fc.vectors.adjoint() * pt * fc.vectors);
    const CMat g = fc.vectors.adjoint() * pt * fc.dvectors;
    Eigen::SelfAdjointEigenSolver<CMat> es(a);
    const RVec& ev = es.eigenvalues();
    const CMat& U = es.eigenvectors();
    // solve for the change from `start`, leaving the kernel directions of A untouched
    CMat m0 = g - cplx(0, 1) * a * start.h;
    CMat rhs = U.adjoint() * (cplx(0, -1) * (m0 - m0.adjoint())) * U;
    const double scale = std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
    CMat dh = CMat::Zero(a.rows(), a.cols());
    for (long j = 0; j < ev.size(); ++j)
        for (long k = 0; k < ev.size(); ++k) {
            const double s = ev(j) + ev(k);
            if (s > 1e-12 * scale) dh(j, k) = rhs(j, k) / s;
        }
    return HermitianGauge{herm(start.h + U * dh * U.adjoint())};
}

double saddle_residual(const CMat& p, const FactorizedComb& fc, const HermitianGauge& g) {
    CMat b = fc.dvectors - cplx(0, 1) * fc.vectors * g.h;
    CMat m = fc.vectors.adjoint() * p.transpose() * b;
    return (m - m.adjoint()).norm();
}

std::string to_string(SynthesisRoute r) {
    switch (r) {
        case SynthesisRoute::Auto: return "auto";
        case SynthesisRoute::SaddleProgram: return "saddle-program";
        case SynthesisRoute::DualBlock: return "dual-block";
    }
    return "?";
}

namespace {

// empty when the objective is within tolerance of lambda
std::string objective_problem(const StrategyChoi& s, const FactorizedComb& fc, const QfiResult& result,
                              const CMat& omega, const SynthesisOptions& opt) {
    const double lam = result.value;
    const double tol = std::max(opt.objective_rel_tol * std::abs(lam), 1e-8);
    const double direct = (s.marginal.mat() * omega).trace().real();
    if (std::abs(direct - lam) <= tol) return {};
    return "objective " + std::to_string(direct) + " vs lambda " + std::to_string(lam) + ", saddle residual " +
           std::to_string(saddle_residual(s.marginal.mat(), fc, result.h_opt));
}

// Per-branch operators in the coordinate space of each branch (reduced for the switch),
// unnormalized: the marginal is the sum of their lifts.
using BranchOps = std::vector<CMat>;

StrategyChoi assemble(const FactorizedComb& fc, const StrategySetSpec& spec, const std::vector<CoordinateSpace>& coords,
                      const BranchOps& xs) {
    const bool free_weights = spec.kind == SetKind::Sup || spec.kind == SetKind::SWI;
    const double prod_even = spec.prod_even();
    const long D = fc.layout.total_dim();
    StrategyChoi out;
    out.spec = spec;
    CMat marginal = CMat::Zero(D, D);
    for (size_t i = 0; i < xs.size(); ++i) {
        CMat full = herm(lifted(spec, coords[i], xs[i]));
        marginal += full;
        if (free_weights) {
            StrategyBranch br;
            br.perm = coords[i].branch;
            br.weight = std::max(0.0, full.trace().real() / prod_even);
            br.op = br.weight > 1e-12 ? CMat(full / br.weight) : primal_space(spec)[i].canonical;
            out.branches.push_back(br);
        }
    }
    out.marginal = LabeledMatrix(fc.layout, herm(marginal));
    return out;
}

BranchOps dual_block_ops(const StrategySetSpec& spec, const std::vector<CoordinateSpace>& coords,
                         const QfiResult& result) {
    const int K = static_cast<int>(coords.size());
    if (static_cast<int>(result.dual_blocks.size()) != K)
        throw SynthesisFailure("QFI result carries no dual blocks for this set");
    BranchOps xs(K);
    double total = 0;
    for (int i = 0; i < K; ++i) {
        if (result.dual_blocks[i].rows() != coords[i].basis->dim())
            throw SynthesisFailure("dual blocks live on a different space than the primal coordinates");
        xs[i] = herm(result.dual_blocks[i]);
        total += lifted(spec, coords[i], xs[i]).trace().real();
    }
    if (!(total > 0)) throw SynthesisFailure("dual blocks vanish");
    for (auto& x : xs) x *= spec.prod_even() / total;
    return xs;
}

BranchOps saddle_program_ops(const FactorizedComb& fc, const StrategySetSpec& spec, const QfiResult& result,
                             const SynthesisOptions& opt) {
    const long D = fc.layout.total_dim();
    const auto coords = primal_coordinates(spec);
    const int K = static_cast<int>(coords.size());
    const bool free_weights = spec.kind == SetKind::Sup || spec.kind == SetKind::SWI;
    const double prod_even = spec.prod_even();

    CMat omega = performance_operator(fc, result.h_opt).mat();
    SaddleRows sr = saddle_matrices(fc, result.h_opt.h);
    int nrows = 0;
    for (bool d : sr.diagonal) nrows += d ? 1 : 2;

    // variables: per branch, free identity (Sup/SWI) then the allowed traceless strings
    std::vector<VarRef> vars;
    std::vector<int> first(K);
    for (int i = 0; i < K; ++i) {
        first[i] = static_cast<int>(vars.size());
        if (free_weights) vars.push_back({i, 0});
        for (long s : coords[i].allowed) vars.push_back({i, s});
    }
    const int nv = static_cast<int>(vars.size());

    SdpProblem p;
    p.num_vars = nv;
    p.maximize = true;
    p.c = RVec::Zero(nv);
    p.group.assign(nv, -1);
    RMat saddle = RMat::Zero(nrows, nv);
    RVec saddle_rhs = RVec::Zero(nrows);
    double obj_const = 0;

    auto put_row = [&](RMat& m, RVec* rhs, int col, const std::vector<cplx>& vals, double sign) {
        int row = 0;
        for (size_t t = 0; t < vals.size(); ++t) {
            if (!sr.diagonal[t]) {
                if (rhs) (*rhs)(row) -= sign * vals[t].real();
                else m(row, col) = vals[t].real();
                ++row;
            }
            if (rhs) (*rhs)(row) -= sign * vals[t].imag();
            else m(row, col) = vals[t].imag();
            ++row;
        }
    };

    for (int i = 0; i < K; ++i) {
        const auto& cs = coords[i];
        const auto& basis = *cs.basis;
        const long Db = basis.dim();
        if (!cs.reduced) {
            // Tr(B_s^T Y) = D c_s(Y^T), Tr(B_s Omega) = D c_s(Omega)
            CVec co = basis.coefficients(omega);
            std::vector<CVec> cy;
            for (const auto& y : sr.y) cy.push_back(basis.coefficients(CMat(y.transpose())));
            for (int v = first[i]; v < (i + 1 < K ? first[i + 1] : nv); ++v) {
                const long s = vars[v].s;
                p.c(v) = static_cast<double>(D) * co(s).real();
                std::vector<cplx> vals;
                for (const auto& c : cy) vals.push_back(static_cast<double>(D) * c(s));
                put_row(saddle, nullptr, v, vals, 0);
            }
            if (!free_weights) {
                const double c0 = cs.identity_coef;
                obj_const += c0 * omega.trace().real();
                std::vector<cplx> vals;
                for (const auto& y : sr.y) vals.push_back(c0 * y.trace());
                put_row(saddle, &saddle_rhs, 0, vals, 1.0);
            }
        } else {
            for (int v = first[i]; v < (i + 1 < K ? first[i + 1] : nv); ++v) {
                CMat a = lifted(spec, cs, basis.element(vars[v].s));
                p.c(v) = (a.cwiseProduct(omega.transpose())).sum().real();
                std::vector<cplx> vals;
                for (const auto& y : sr.y) vals.push_back(a.cwiseProduct(y).sum());
                put_row(saddle, nullptr, v, vals, 0);
            }
        }
        SdpBlock b;
        b.f0 = free_weights ? CMat::Zero(Db, Db) : CMat(CMat::Identity(Db, Db) * cs.identity_coef);
        SdpBlock::BasisTerms bt;
        bt.basis = cs.basis;
        for (int v = first[i]; v < (i + 1 < K ? first[i + 1] : nv); ++v) {
            bt.strings.push_back(vars[v].s);
            bt.vars.push_back(v);
            p.group[v] = i;
        }
        b.basis_terms.push_back(bt);
        p.blocks.push_back(std::move(b));
        p.block_group.push_back(i);
    }

    // weights: Tr P~ = prod d_even, or Tr of the mixed probes = 1 for the switch
    int neq = nrows + (free_weights ? 1 : 0);
    p.eq = RMat::Zero(neq, nv);
    p.eq_rhs = RVec::Zero(neq);
    p.eq.topRows(nrows) = saddle;
    p.eq_rhs.head(nrows) = saddle_rhs;
    RVec x0 = RVec::Zero(nv);
    if (free_weights) {
        for (int i = 0; i < K; ++i) {
            const double db = static_cast<double>(coords[i].basis->dim());
            const double unit = coords[i].reduced ? db : db / prod_even;
            p.eq(nrows, first[i]) = unit;
            x0(first[i]) = 1.0 / (K * unit);
        }
        p.eq_rhs(nrows) = 1.0;
    }
    p.x0 = x0;

    SdpSolution sol = solve(p, opt.sdp);
    if (sol.status != SdpStatus::Optimal)
        throw SynthesisFailure("saddle program ended with status " + to_string(sol.status) +
                               ", equality residual " + std::to_string(sol.primal_infeasibility));
    BranchOps xs(K);
    for (int i = 0; i < K; ++i) {
        const auto& cs = coords[i];
        const long Db = cs.basis->dim();
        CMat x = free_weights ? CMat::Zero(Db, Db) : CMat(CMat::Identity(Db, Db) * cs.identity_coef);
        for (int v = first[i]; v < (i + 1 < K ? first[i + 1] : nv); ++v)
            x += sol.x(v) * cs.basis->element(vars[v].s);
        xs[i] = herm(x);
    }
    return xs;
}

}  // namespace

StrategyChoi optimal_strategy(const FactorizedComb& fc, const StrategySetSpec& spec, const QfiResult& result,
                              const SynthesisOptions& opt) {
    if (fc.layout != spec.layout()) throw DimensionError("comb layout does not match the strategy set");
    if (result.spec.kind != spec.kind || result.spec.perms != spec.perms || result.spec.dims != spec.dims)
        throw std::invalid_argument("QFI result belongs to a different strategy set");
    const CMat omega = performance_operator(fc, result.h_opt).mat();
    std::vector<SynthesisRoute> order;
    if (opt.route == SynthesisRoute::Auto) order = {SynthesisRoute::DualBlock, SynthesisRoute::SaddleProgram};
    else order = {opt.route};

    const auto coords = primal_coordinates(spec);
    std::string why;
    std::vector<std::pair<double, StrategyChoi>> reached;
    for (auto route : order) {
        BranchOps xs;
        try {
            xs = route == SynthesisRoute::DualBlock ? dual_block_ops(spec, coords, result)
                                                   : saddle_program_ops(fc, spec, result, opt);
        } catch (const SynthesisFailure& e) {
            why += "; " + to_string(route) + ": " + e.what();
            continue;
        }
        StrategyChoi st = assemble(fc, spec, coords, xs);
        st.route = route;
        st.status = route == SynthesisRoute::DualBlock ? result.status : SdpStatus::Optimal;
        const std::string bad = objective_problem(st, fc, result, omega, opt);
        if (!bad.empty()) {
            why += "; " + to_string(route) + ": " + bad;
            continue;
        }
        st.gauge = refine_gauge(st.marginal.mat(), fc, result.h_opt);
        st.objective = (st.marginal.mat() * performance_operator(fc, st.gauge).mat()).trace().real();
        const double sres = saddle_residual(st.marginal.mat(), fc, st.gauge);
        if (sres <= opt.saddle_tol && membership_residual(st) <= opt.membership_tol)
            return opt.purify ? purify_strategy(st) : st;
        reached.emplace_back(sres, std::move(st));
    }
    if (reached.empty()) throw SynthesisFailure("synthesis failed" + why);
    auto best = std::min_element(reached.begin(), reached.end(),
                                 [](const auto& a, const auto& b) { return a.first < b.first; });
    return opt.purify ? purify_strategy(best->second) : best->second;
}

double membership_residual(const StrategyChoi& s) {
    const auto spaces = primal_space(s.spec);
    const CMat& m = s.marginal.mat();
    double res = std::max(0.0, -min_eig(m));
    if (s.spec.kind == SetKind::Sup || s.spec.kind == SetKind::SWI) {
        if (s.branches.size() != spaces.size()) return std::numeric_limits<double>::infinity();
        CMat sum = CMat::Zero(m.rows(), m.cols());
        double wsum = 0;
        for (size_t i = 0; i < spaces.size(); ++i) {
            const auto& b = s.branches[i];
            res = std::max(res, spaces[i].residual(b.op));
            res = std::max(res, std::max(0.0, -min_eig(b.op)));
            res = std::max(res, std::max(0.0, -b.weight));
            sum += b.weight * b.op;
            wsum += b.weight;
        }
        res = std::max(res, (sum - m).norm());
        res = std::max(res, std::abs(wsum - 1.0));
    } else {
        res = std::max(res, spaces.front().residual(m));
    }
    return res;
}

StrategyChoi purify_strategy(const StrategyChoi& s) {
    StrategyChoi out = s;
    const Layout& lay = s.marginal.layout();
    const long D = lay.total_dim();
    if (s.branches.empty()) {
        auto pu = purify(s.marginal, "F");
        out.purification_layout = pu.layout;
        out.purification = pu.vec;
        out.purified = true;
        return out;
    }
    // |P> = sum_pi sqrt(q_pi) |P^pi>|pi>_C, branch futures padded to a common size
    const long K = static_cast<long>(s.branches.size());
    std::vector<Purification> parts(K);
    long f = 1;
    for (long i = 0; i < K; ++i) {
        if (s.branches[i].weight <= 0) continue;
        parts[i] = purify(LabeledMatrix(lay, herm(s.branches[i].op)), "F");
        f = std::max(f, parts[i].layout.total_dim() / D);
    }
    std::vector<Factor> fac = lay.factors();
    fac.push_back({"F", static_cast<int>(f)});
    if (K > 1) fac.push_back({"C", static_cast<int>(K)});
    out.purification_layout = Layout(fac);
    out.purification = CVec::Zero(D * f * K);
    for (long i = 0; i < K; ++i) {
        if (s.branches[i].weight <= 0) continue;
        const long fi = parts[i].layout.total_dim() / D;
        const double w = std::sqrt(s.branches[i].weight);
        for (long x = 0; x < D; ++x)
            for (long a = 0; a < fi; ++a) out.purification((x * f + a) * K + i) = w * parts[i].vec(x * fi + a);
    }
    out.purified = true;
    return out;
}

std::vector<IoPair> strategy_teeth(const std::vector<int>& perm, const std::string& future) {
    std::vector<IoPair> t;
    std::string prev;
    for (int c : perm) {
        t.push_back({prev, slot(2 * c - 1)});
        prev = slot(2 * c);
    }
    t.push_back({prev, future});
    return t;
}

IsometrySequence comb_to_isometries(const LabeledMatrix& c, const std::vector<IoPair>& pairs, double rank_tol) {
    auto rep = validate_comb(c, pairs);
    if (!rep.pass) throw std::invalid_argument("comb_to_isometries: operator is not a valid comb");
    IsometrySequence seq;
    seq.pairs = pairs;
    std::vector<std::string> order;
    for (const auto& pr : pairs) {
        seq.din.push_back(pr.in.empty() ? 1 : c.layout().dim(pr.in));
        seq.dout.push_back(pr.out.empty() ? 1 : c.layout().dim(pr.out));
        if (!pr.in.empty()) order.push_back(pr.in);
        if (!pr.out.empty()) order.push_back(pr.out);
    }
    if (static_cast<int>(order.size()) != c.layout().size())
        throw LabelError("comb_to_isometries: teeth must cover every factor exactly once");
    const int n = static_cast<int>(pairs.size());
    // C^(n) = C, C^(k-1) = Tr_{in_k out_k} C^(k) / d_in_k
    std::vector<CMat> ck(n + 1);
    LabeledMatrix cur = reorder(c, order);
    ck[n] = cur.mat();
    for (int k = n; k >= 1; --k) {
        std::vector<std::string> drop;
        if (!pairs[k - 1].in.empty()) drop.push_back(pairs[k - 1].in);
        if (!pairs[k - 1].out.empty()) drop.push_back(pairs[k - 1].out);
        cur = partial_trace(cur, drop);
        cur = LabeledMatrix(cur.layout(), cur.mat() / static_cast<double>(seq.din[k - 1]));
        ck[k - 1] = cur.mat();
    }
    // square-root factors C^(k) = M_k M_k^dag, M_k = U sqrt(L) on the support
    std::vector<CMat> mk(n + 1), pinv(n + 1);
    for (int k = 0; k <= n; ++k) {
        Eigen::SelfAdjointEigenSolver<CMat> es(herm(ck[k]));
        const RVec& ev = es.eigenvalues();
        const double top = std::max(ev.maxCoeff(), 0.0);
        std::vector<long> sup;
        for (long j = ev.size() - 1; j >= 0; --j)
            if (ev(j) > rank_tol * top) sup.push_back(j);
        const long r = static_cast<long>(sup.size());
        mk[k].resize(ck[k].rows(), r);
        pinv[k].resize(r, ck[k].rows());
        for (long j = 0; j < r; ++j) {
            const double l = ev(sup[j]);
            mk[k].col(j) = es.eigenvectors().col(sup[j]) * std::sqrt(l);
            pinv[k].row(j) = es.eigenvectors().col(sup[j]).adjoint() / std::sqrt(l);
        }
        if (k > 0) seq.ancilla.push_back(static_cast<int>(r));
    }
    // V[(o, b), (i, a)] = sum_x pinv_{k-1}[a, x] M_k[(x, i, o), b]
    for (int k = 1; k <= n; ++k) {
        const long di = seq.din[k - 1], dout = seq.dout[k - 1];
        const long ra = mk[k - 1].cols(), rb = mk[k].cols();
        const long X = mk[k - 1].rows();
        CMat v = CMat::Zero(dout * rb, di * ra);
        for (long b = 0; b < rb; ++b) {
            Eigen::Map<const Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> t(
                mk[k].col(b).data(), X, di * dout);
            CMat w = pinv[k - 1] * t;
            for (long a = 0; a < ra; ++a)
                for (long i = 0; i < di; ++i)
                    for (long o = 0; o < dout; ++o) v(o * rb + b, i * ra + a) = w(a, i * dout + o);
        }
        // nearest isometry; only moves v when the input comb is valid to a tolerance
        Eigen::JacobiSVD<CMat> svd(v, Eigen::ComputeThinU | Eigen::ComputeThinV);
        seq.isometries.push_back(svd.matrixU() * svd.matrixV().adjoint());
    }
    return seq;
}

LabeledMatrix isometries_to_comb(const IsometrySequence& seq) {
    const size_t n = seq.isometries.size();
    if (seq.pairs.size() != n || seq.din.size() != n || seq.dout.size() != n || seq.ancilla.size() != n)
        throw DimensionError("isometry sequence fields have inconsistent lengths");
    CMat psi = CMat::Ones(1, 1);  // rows: teeth so far, cols: ancilla
    std::vector<Factor> fac;
    for (size_t k = 0; k < n; ++k) {
        const long di = seq.din[k], dout = seq.dout[k];
        const long ra = psi.cols(), rb = seq.ancilla[k];
        const CMat& v = seq.isometries[k];
        if (v.rows() != dout * rb || v.cols() != di * ra)
            throw DimensionError("isometry " + std::to_string(k + 1) + " does not chain");
        const long X = psi.rows();
        CMat next = CMat::Zero(X * di * dout, rb);
        for (long i = 0; i < di; ++i)
            for (long o = 0; o < dout; ++o) {
                // rows (o, b), cols (i, a) restricted to fixed i, o
                CMat vio(ra, rb);
                for (long a = 0; a < ra; ++a)
                    for (long b = 0; b < rb; ++b) vio(a, b) = v(o * rb + b, i * ra + a);
                CMat part = psi * vio;
                for (long x = 0; x < X; ++x) next.row((x * di + i) * dout + o) = part.row(x);
            }
        psi = next;
        if (!seq.pairs[k].in.empty()) fac.push_back({seq.pairs[k].in, static_cast<int>(di)});
        if (!seq.pairs[k].out.empty()) fac.push_back({seq.pairs[k].out, static_cast<int>(dout)});
    }
    return LabeledMatrix(Layout(fac), psi * psi.adjoint());
}

// ---- JSON ----

namespace {

json matrix_json(const CMat& m) {
    json data = json::array();
    for (long i = 0; i < m.rows(); ++i)
        for (long j = 0; j < m.cols(); ++j) data.push_back({m(i, j).real(), m(i, j).imag()});
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

CMat matrix_from_json(const json& j) {
    const long r = j.at("rows").get<long>(), c = j.at("cols").get<long>();
    const auto& d = j.at("data");
    if (static_cast<long>(d.size()) != r * c) throw std::invalid_argument("matrix data has the wrong length");
    CMat m(r, c);
    for (long i = 0; i < r; ++i)
        for (long k = 0; k < c; ++k) {
            const auto& e = d[i * c + k];
            m(i, k) = cplx(e.at(0).get<double>(), e.at(1).get<double>());
        }
    return m;
}

json layout_json(const Layout& l) {
    json a = json::array();
    for (const auto& f : l.factors()) a.push_back({{"label", f.label}, {"dim", f.dim}});
    return a;
}

Layout layout_from_json(const json& j) {
    std::vector<Factor> f;
    for (const auto& e : j) f.push_back({e.at("label").get<std::string>(), e.at("dim").get<int>()});
    return Layout(f);
}

}  // namespace

void write_strategy_json(const StrategyChoi& s, std::ostream& os, const std::vector<IsometrySequence>& isometries) {
    json j;
    j["format"] = "qmetro-strategy";
    j["schema_version"] = 1;
    j["set"] = to_string(s.spec.kind);
    j["N"] = s.spec.N;
    j["dims"] = s.spec.dims;
    j["perms"] = s.spec.perms;
    j["layout"] = layout_json(s.marginal.layout());
    j["marginal"] = matrix_json(s.marginal.mat());
    j["objective"] = s.objective;
    j["status"] = to_string(s.status);
    j["route"] = to_string(s.route);
    j["gauge"] = matrix_json(s.gauge.h);
    json br = json::array();
    for (const auto& b : s.branches) {
        Eigen::SelfAdjointEigenSolver<CMat> es(herm(b.op), Eigen::EigenvaluesOnly);
        long rank = 0;
        for (long k = 0; k < es.eigenvalues().size(); ++k)
            if (es.eigenvalues()(k) > 1e-10 * std::max(1.0, es.eigenvalues().maxCoeff())) ++rank;
        br.push_back({{"perm", b.perm}, {"weight", b.weight}, {"rank", rank}, {"operator", matrix_json(b.op)}});
    }
    j["branches"] = br;
    if (s.purified) {
        j["purification"] = {{"layout", layout_json(s.purification_layout)},
                             {"vector", matrix_json(CMat(s.purification))}};
    }
    json iso = json::array();
    for (const auto& seq : isometries) {
        json teeth = json::array();
        for (size_t k = 0; k < seq.isometries.size(); ++k)
            teeth.push_back({{"in", seq.pairs[k].in},
                             {"out", seq.pairs[k].out},
                             {"ancilla", seq.ancilla[k]},
                             {"isometry", matrix_json(seq.isometries[k])}});
        iso.push_back(teeth);
    }
    j["isometries"] = iso;
    os << j.dump(1) << "\n";
}

StrategyChoi read_strategy_json(std::istream& is) {
    json j = json::parse(is);
    if (j.value("format", "") != "qmetro-strategy") throw std::invalid_argument("not a strategy document");
    if (j.value("schema_version", 1) != 1) throw std::invalid_argument("unsupported strategy schema_version");
    StrategyChoi s;
    s.spec.kind = set_kind_from_string(j.at("set").get<std::string>());
    s.spec.N = j.at("N").get<int>();
    s.spec.dims = j.at("dims").get<std::vector<int>>();
    s.spec.perms = j.at("perms").get<std::vector<std::vector<int>>>();
    s.marginal = LabeledMatrix(layout_from_json(j.at("layout")), matrix_from_json(j.at("marginal")));
    s.objective = j.value("objective", 0.0);
    if (j.contains("gauge")) s.gauge.h = matrix_from_json(j["gauge"]);
    const std::string route = j.value("route", "");
    if (route == to_string(SynthesisRoute::DualBlock)) s.route = SynthesisRoute::DualBlock;
    for (const auto& b : j.at("branches")) {
        StrategyBranch br;
        br.perm = b.at("perm").get<std::vector<int>>();
        br.weight = b.at("weight").get<double>();
        br.op = matrix_from_json(b.at("operator"));
        s.branches.push_back(br);
    }
    if (j.contains("purification")) {
        s.purification_layout = layout_from_json(j["purification"].at("layout"));
        s.purification = matrix_from_json(j["purification"].at("vector")).col(0);
        s.purified = true;
    }
    s.status = SdpStatus::Optimal;
    return s;
}

}  // namespace qmetro
