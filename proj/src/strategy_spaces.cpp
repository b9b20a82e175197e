#include "qmetro/strategy_spaces.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

namespace qmetro {

std::string to_string(SetKind k) {
    switch (k) {
        case SetKind::Par: return "par";
        case SetKind::Seq: return "seq";
        case SetKind::SWI: return "swi";
        case SetKind::Sup: return "sup";
        case SetKind::ICO: return "ico";
    }
    return "?";
}

SetKind set_kind_from_string(const std::string& s) {
    std::string l = s;
    std::transform(l.begin(), l.end(), l.begin(), [](unsigned char c) { return std::tolower(c); });
    if (l == "par") return SetKind::Par;
    if (l == "seq") return SetKind::Seq;
    if (l == "swi" || l == "switch") return SetKind::SWI;
    if (l == "sup") return SetKind::Sup;
    if (l == "ico") return SetKind::ICO;
    throw std::invalid_argument("unknown strategy set '" + s + "'");
}

std::string slot(int i) { return std::to_string(i); }

Layout process_layout(const std::vector<int>& dims) {
    std::vector<Factor> f;
    for (size_t i = 0; i < dims.size(); ++i) f.push_back({slot(static_cast<int>(i) + 1), dims[i]});
    return Layout(f);
}

std::vector<std::vector<int>> permutations_lex(int N) {
    std::vector<int> p(N);
    std::iota(p.begin(), p.end(), 1);
    std::vector<std::vector<int>> out;
    do out.push_back(p);
    while (std::next_permutation(p.begin(), p.end()));
    return out;
}

StrategySetSpec StrategySetSpec::make(SetKind kind, int N, int d) {
    return make(kind, std::vector<int>(2 * N, d));
}

StrategySetSpec StrategySetSpec::make(SetKind kind, const std::vector<int>& dims) {
    if (dims.empty() || dims.size() % 2) throw std::invalid_argument("need 2N slot dimensions");
    StrategySetSpec s;
    s.kind = kind;
    s.N = static_cast<int>(dims.size()) / 2;
    s.dims = dims;
    if (kind == SetKind::SWI || kind == SetKind::Sup) {
        s.perms = permutations_lex(s.N);
        if (kind == SetKind::SWI)
            for (int i = 1; i < 2 * s.N; ++i)
                if (dims[i] != dims[0]) throw std::invalid_argument("SWITCH needs equal slot dimensions");
    } else {
        std::vector<int> id(s.N);
        std::iota(id.begin(), id.end(), 1);
        s.perms = {id};
    }
    return s;
}

StrategySetSpec StrategySetSpec::sequential_order(const std::vector<int>& order,
                                                  const std::vector<int>& dims) {
    StrategySetSpec s = make(SetKind::Seq, dims);
    if (static_cast<int>(order.size()) != s.N) throw std::invalid_argument("order length must be N");
    s.perms = {order};
    return s;
}

double StrategySetSpec::prod_odd() const {
    double p = 1;
    for (int i = 0; i < N; ++i) p *= dims[2 * i];
    return p;
}

double StrategySetSpec::prod_even() const {
    double p = 1;
    for (int i = 0; i < N; ++i) p *= dims[2 * i + 1];
    return p;
}

namespace {

using Labels = std::vector<std::string>;

AffineConstraint neutral_eq(const Labels& a, const Labels& b) {
    AffineConstraint c;
    c.kind = AffineConstraint::Kind::Neutral;
    c.terms = {{1.0, a}, {-1.0, b}};
    return c;
}

AffineConstraint trace_eq(double t) {
    AffineConstraint c;
    c.kind = AffineConstraint::Kind::Trace;
    c.trace = t;
    return c;
}

// labels of the teeth after position i (0-based) of the order
Labels later_teeth(const std::vector<int>& perm, int i) {
    Labels l;
    for (size_t j = i + 1; j < perm.size(); ++j) {
        l.push_back(slot(2 * perm[j] - 1));
        l.push_back(slot(2 * perm[j]));
    }
    return l;
}

std::vector<AffineConstraint> comb_tower(const std::vector<int>& perm) {
    // _{out_i, later, in_i} X = _{out_i, later} X
    std::vector<AffineConstraint> out;
    for (int i = 0; i < static_cast<int>(perm.size()); ++i) {
        Labels s = later_teeth(perm, i);
        s.insert(s.begin(), slot(2 * perm[i]));
        Labels t = s;
        t.push_back(slot(2 * perm[i] - 1));
        out.push_back(neutral_eq(t, s));
    }
    return out;
}

std::vector<AffineConstraint> strategy_tower(const std::vector<int>& perm) {
    std::vector<AffineConstraint> out;
    const int N = static_cast<int>(perm.size());
    out.push_back(neutral_eq({}, {slot(2 * perm[N - 1])}));
    for (int i = 0; i < N - 1; ++i) {
        Labels b = later_teeth(perm, i);
        Labels a = b;
        a.insert(a.begin(), slot(2 * perm[i]));
        out.push_back(neutral_eq(a, b));
    }
    return out;
}

CMat scaled_identity(long D, double trace) { return CMat::Identity(D, D) * (trace / D); }

bool all_trivial(const ProductBasis& b, long s, const Labels& labels) {
    for (const auto& l : labels)
        if (!b.trivial_on(s, b.layout().index_of(l))) return false;
    return true;
}

std::shared_ptr<const ProductBasis> shared_basis(const Layout& l) {
    return std::make_shared<const ProductBasis>(l);
}

}  // namespace

std::vector<std::pair<std::string, std::string>> switch_links(const std::vector<int>& perm) {
    std::vector<std::pair<std::string, std::string>> l;
    for (size_t i = 0; i + 1 < perm.size(); ++i)
        l.push_back({slot(2 * perm[i]), slot(2 * perm[i + 1] - 1)});
    return l;
}

double AffineSpace::trace_value() const {
    for (const auto& c : constraints)
        if (c.kind == AffineConstraint::Kind::Trace) return c.trace;
    return canonical.trace().real();
}

bool AffineSpace::is_diagonal() const {
    for (const auto& c : constraints)
        if (c.kind == AffineConstraint::Kind::Sandwich || c.kind == AffineConstraint::Kind::LinkedProduct)
            return false;
    return true;
}

std::vector<long> AffineSpace::allowed_strings(const ProductBasis& basis) const {
    if (!is_diagonal()) throw std::logic_error("space is not diagonal in the product basis");
    std::vector<long> out;
    for (long s = 1; s < basis.size(); ++s) {
        bool ok = true;
        for (const auto& c : constraints) {
            if (c.kind == AffineConstraint::Kind::Neutral) {
                double sum = 0;
                for (const auto& t : c.terms)
                    if (all_trivial(basis, s, t.labels)) sum += t.coef;
                if (std::abs(sum) > 1e-12) ok = false;
            } else if (c.kind == AffineConstraint::Kind::Support) {
                if (!std::binary_search(c.support.begin(), c.support.end(), s)) ok = false;
            }
            if (!ok) break;
        }
        if (ok) out.push_back(s);
    }
    return out;
}

double AffineSpace::residual(const CMat& x) const {
    double worst = 0;
    for (const auto& c : constraints) {
        double r = 0;
        switch (c.kind) {
            case AffineConstraint::Kind::Neutral: {
                CMat acc = CMat::Zero(x.rows(), x.cols());
                for (const auto& t : c.terms)
                    acc += t.coef * (t.labels.empty() ? x : neutralize(x, layout, t.labels));
                r = acc.norm();
                break;
            }
            case AffineConstraint::Kind::Trace:
                r = std::abs(x.trace().real() - c.trace) + std::abs(x.trace().imag());
                break;
            case AffineConstraint::Kind::Sandwich: {
                LabeledMatrix t = partial_trace(LabeledMatrix(layout, x), {c.out_label});
                LabeledMatrix s = contract_links(t, c.links);
                r = (s.mat() - CMat::Identity(s.dim(), s.dim())).norm();
                break;
            }
            case AffineConstraint::Kind::LinkedProduct: {
                Labels rest;
                for (const auto& l : layout.labels())
                    if (l != c.in_label) rest.push_back(l);
                CMat rho = partial_trace(x, layout, rest);
                double norm = 1;
                for (const auto& pr : c.links) norm *= layout.dim(pr.first);
                norm *= layout.dim(c.out_label);
                rho /= norm;
                // rebuild rho (x) links (x) I_out on the same layout
                std::vector<Factor> f{{c.in_label, layout.dim(c.in_label)}};
                CMat m = rho;
                for (const auto& pr : c.links) {
                    int d = layout.dim(pr.first);
                    CVec e = max_entangled(d);
                    m = kron(m, CMat(e * e.adjoint()));
                    f.push_back({pr.first, d});
                    f.push_back({pr.second, d});
                }
                m = kron(m, CMat::Identity(layout.dim(c.out_label), layout.dim(c.out_label)));
                f.push_back({c.out_label, layout.dim(c.out_label)});
                r = (x - permute_matrix(m, Layout(f), layout)).norm();
                break;
            }
            case AffineConstraint::Kind::Support: {
                ProductBasis b(layout);
                CVec co = b.coefficients(x);
                double acc = 0;
                for (long s = 1; s < b.size(); ++s)
                    if (!std::binary_search(c.support.begin(), c.support.end(), s)) acc += std::norm(co(s));
                r = std::sqrt(acc * static_cast<double>(b.dim()));
                break;
            }
        }
        worst = std::max(worst, r);
    }
    return worst;
}

std::vector<AffineSpace> dual_space(const StrategySetSpec& spec) {
    const Layout lay = spec.layout();
    const long D = lay.total_dim();
    std::vector<AffineSpace> out;
    auto base = [&](const std::vector<int>& branch) {
        AffineSpace a;
        a.layout = lay;
        a.branch = branch;
        a.canonical = scaled_identity(D, spec.prod_odd());
        return a;
    };
    switch (spec.kind) {
        case SetKind::Par: {
            AffineSpace a = base({});
            Labels evens, all = lay.labels();
            for (int i = 1; i <= spec.N; ++i) evens.push_back(slot(2 * i));
            a.constraints.push_back(neutral_eq(evens, all));
            a.constraints.push_back(trace_eq(spec.prod_odd()));
            out.push_back(a);
            break;
        }
        case SetKind::Seq:
        case SetKind::Sup: {
            for (const auto& p : spec.perms) {
                AffineSpace a = base(spec.kind == SetKind::Sup ? p : std::vector<int>{});
                a.constraints = comb_tower(p);
                a.constraints.push_back(trace_eq(spec.prod_odd()));
                out.push_back(a);
            }
            break;
        }
        case SetKind::ICO: {
            AffineSpace a = base({});
            for (int i = 1; i <= spec.N; ++i)
                a.constraints.push_back(neutral_eq({slot(2 * i), slot(2 * i - 1)}, {slot(2 * i)}));
            a.constraints.push_back(trace_eq(spec.prod_odd()));
            out.push_back(a);
            break;
        }
        case SetKind::SWI: {
            for (const auto& p : spec.perms) {
                AffineSpace a = base(p);
                AffineConstraint c;
                c.kind = AffineConstraint::Kind::Sandwich;
                c.links = switch_links(p);
                c.in_label = slot(2 * p.front() - 1);
                c.out_label = slot(2 * p.back());
                a.constraints.push_back(c);
                out.push_back(a);
            }
            break;
        }
    }
    return out;
}

std::vector<AffineSpace> primal_space(const StrategySetSpec& spec) {
    const Layout lay = spec.layout();
    const long D = lay.total_dim();
    std::vector<AffineSpace> out;
    auto base = [&](const std::vector<int>& branch) {
        AffineSpace a;
        a.layout = lay;
        a.branch = branch;
        a.canonical = scaled_identity(D, spec.prod_even());
        return a;
    };
    switch (spec.kind) {
        case SetKind::Par: {
            AffineSpace a = base({});
            Labels evens;
            for (int i = 1; i <= spec.N; ++i) evens.push_back(slot(2 * i));
            a.constraints.push_back(neutral_eq({}, evens));
            a.constraints.push_back(trace_eq(spec.prod_even()));
            out.push_back(a);
            break;
        }
        case SetKind::Seq:
        case SetKind::Sup: {
            for (const auto& p : spec.perms) {
                AffineSpace a = base(spec.kind == SetKind::Sup ? p : std::vector<int>{});
                a.constraints = strategy_tower(p);
                a.constraints.push_back(trace_eq(spec.prod_even()));
                out.push_back(a);
            }
            break;
        }
        case SetKind::ICO: {
            AffineSpace a = base({});
            if (spec.N == 1) {
                a.constraints.push_back(neutral_eq({}, {slot(2)}));
            } else if (spec.N == 2) {
                a.constraints.push_back(neutral_eq({"1", "2"}, {"1", "2", "4"}));
                a.constraints.push_back(neutral_eq({"3", "4"}, {"2", "3", "4"}));
                AffineConstraint c;
                c.kind = AffineConstraint::Kind::Neutral;
                c.terms = {{1.0, {}}, {-1.0, {"4"}}, {-1.0, {"2"}}, {1.0, {"2", "4"}}};
                a.constraints.push_back(c);
            } else {
                // no explicit listing: take the annihilator of the no-signaling dual
                ProductBasis b(lay);
                auto dual = dual_space(spec).front().allowed_strings(b);
                AffineConstraint c;
                c.kind = AffineConstraint::Kind::Support;
                for (long s = 1; s < b.size(); ++s)
                    if (!std::binary_search(dual.begin(), dual.end(), s)) c.support.push_back(s);
                a.constraints.push_back(c);
            }
            a.constraints.push_back(trace_eq(spec.prod_even()));
            out.push_back(a);
            break;
        }
        case SetKind::SWI: {
            for (const auto& p : spec.perms) {
                AffineSpace a = base(p);
                AffineConstraint c;
                c.kind = AffineConstraint::Kind::LinkedProduct;
                c.links = switch_links(p);
                c.in_label = slot(2 * p.front() - 1);
                c.out_label = slot(2 * p.back());
                a.constraints.push_back(c);
                a.constraints.push_back(trace_eq(spec.prod_even()));
                int d = spec.dims[0];
                a.canonical = switch_branch_operator(spec, p, CMat::Identity(d, d) / d);
                out.push_back(a);
            }
            break;
        }
    }
    return out;
}

CMat CoordinateSpace::element(const RVec& x) const {
    if (x.size() != static_cast<long>(allowed.size())) throw DimensionError("coordinate count mismatch");
    CVec c = CVec::Zero(basis->size());
    c(0) = identity_coef;
    for (size_t k = 0; k < allowed.size(); ++k) c(allowed[k]) = x(static_cast<long>(k));
    return basis->synthesize(c);
}

std::vector<CoordinateSpace> dual_coordinates(const StrategySetSpec& spec) {
    std::vector<CoordinateSpace> out;
    if (spec.kind == SetKind::SWI) {
        const Layout lay = spec.layout();
        for (const auto& p : spec.perms) {
            CoordinateSpace cs;
            cs.reduced = true;
            cs.branch = p;
            cs.links = switch_links(p);
            cs.in_label = slot(2 * p.front() - 1);
            cs.out_label = slot(2 * p.back());
            Labels used;
            for (const auto& pr : cs.links) {
                used.push_back(pr.first);
                used.push_back(pr.second);
            }
            Layout red = lay.without(used);
            cs.basis = shared_basis(red);
            int oi = red.index_of(cs.out_label);
            for (long s = 1; s < cs.basis->size(); ++s)
                if (!cs.basis->trivial_on(s, oi)) cs.allowed.push_back(s);
            cs.identity_coef = 1.0 / red.dim(cs.out_label);
            out.push_back(cs);
        }
        return out;
    }
    auto spaces = dual_space(spec);
    auto basis = shared_basis(spec.layout());
    for (const auto& a : spaces) {
        CoordinateSpace cs;
        cs.basis = basis;
        cs.branch = a.branch;
        cs.allowed = a.allowed_strings(*basis);
        cs.identity_coef = a.trace_value() / static_cast<double>(basis->dim());
        out.push_back(cs);
    }
    return out;
}

std::vector<CoordinateSpace> primal_coordinates(const StrategySetSpec& spec) {
    std::vector<CoordinateSpace> out;
    if (spec.kind == SetKind::SWI) {
        for (const auto& p : spec.perms) {
            CoordinateSpace cs;
            cs.reduced = true;
            cs.branch = p;
            cs.links = switch_links(p);
            cs.in_label = slot(2 * p.front() - 1);
            cs.out_label = slot(2 * p.back());
            cs.basis = shared_basis(Layout({{cs.in_label, spec.dims[2 * p.front() - 2]}}));
            for (long s = 1; s < cs.basis->size(); ++s) cs.allowed.push_back(s);
            cs.identity_coef = 1.0 / cs.basis->dim();
            out.push_back(cs);
        }
        return out;
    }
    auto spaces = primal_space(spec);
    auto basis = shared_basis(spec.layout());
    for (const auto& a : spaces) {
        CoordinateSpace cs;
        cs.basis = basis;
        cs.branch = a.branch;
        cs.allowed = a.allowed_strings(*basis);
        cs.identity_coef = a.trace_value() / static_cast<double>(basis->dim());
        out.push_back(cs);
    }
    return out;
}

CMat switch_branch_operator(const StrategySetSpec& spec, const std::vector<int>& perm, const CMat& rho) {
    const Layout lay = spec.layout();
    std::string in = slot(2 * perm.front() - 1), outl = slot(2 * perm.back());
    std::vector<Factor> f{{in, lay.dim(in)}};
    CMat m = rho;
    for (const auto& pr : switch_links(perm)) {
        int d = lay.dim(pr.first);
        CVec e = max_entangled(d);
        m = kron(m, CMat(e * e.adjoint()));
        f.push_back({pr.first, d});
        f.push_back({pr.second, d});
    }
    int dout = lay.dim(outl);
    m = kron(m, CMat::Identity(dout, dout));
    f.push_back({outl, dout});
    return permute_matrix(m, Layout(f), lay);
}

SwitchTemplate switch_template(int N, int d) {
    auto perms = permutations_lex(N);
    const int K = static_cast<int>(perms.size());
    std::vector<Factor> f{{"C", K}, {"T", d}};
    for (int i = 1; i <= 2 * N; ++i) f.push_back({slot(i), d});
    f.push_back({"F_T", d});
    f.push_back({"F_C", K});
    SwitchTemplate t;
    t.layout = Layout(f);
    t.vec = CVec::Zero(t.layout.total_dim());
    for (int k = 0; k < K; ++k) {
        const auto& p = perms[k];
        CVec ck = CVec::Zero(K);
        ck(k) = 1.0;
        std::vector<Factor> g{{"C", K}, {"T", d}, {slot(2 * p.front() - 1), d}};
        CVec v = kron(ck, max_entangled(d));
        for (const auto& pr : switch_links(p)) {
            v = kron(v, max_entangled(d));
            g.push_back({pr.first, d});
            g.push_back({pr.second, d});
        }
        v = kron(v, max_entangled(d));
        g.push_back({slot(2 * p.back()), d});
        g.push_back({"F_T", d});
        v = kron(v, ck);
        g.push_back({"F_C", K});
        t.vec += permute_vector(v, Layout(g), t.layout);
    }
    return t;
}

namespace {
CMat pauli(char c) {
    CMat m = CMat::Zero(2, 2);
    switch (c) {
        case 'I': m << 1, 0, 0, 1; break;
        case 'X': m << 0, 1, 1, 0; break;
        case 'Y': m << 0, cplx(0, -1), cplx(0, 1), 0; break;
        case 'Z': m << 1, 0, 0, -1; break;
        default: throw std::invalid_argument("bad Pauli label");
    }
    return m;
}
CMat pauli_string(const std::string& s) {
    CMat m = CMat::Identity(1, 1);
    for (char c : s) m = kron(m, pauli(c));
    return m;
}
}  // namespace

LabeledMatrix ocb_process() {
    CMat m = pauli_string("IIII") + (pauli_string("IZZI") + pauli_string("ZIXZ")) / std::sqrt(2.0);
    return LabeledMatrix(process_layout({2, 2, 2, 2}), m / 4.0);
}

LabeledMatrix ocb_witness() {
    CMat m = pauli_string("IIII") - pauli_string("IZZI") - pauli_string("ZIXZ");
    return LabeledMatrix(process_layout({2, 2, 2, 2}), m / 4.0);
}

double causal_witness_value(const LabeledMatrix& w, const LabeledMatrix& c) {
    if (w.layout() != c.layout()) throw DimensionError("witness and process layouts differ");
    return (w.mat() * c.mat()).trace().real();
}

}  // namespace qmetro
