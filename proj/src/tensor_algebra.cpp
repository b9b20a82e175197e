#include "qmetro/tensor_algebra.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <set>

namespace qmetro {

Layout::Layout(std::vector<Factor> factors) : factors_(std::move(factors)) {
    std::set<std::string> seen;
    total_ = 1;
    for (const auto& f : factors_) {
        if (f.dim < 1) throw DimensionError("factor '" + f.label + "' has non-positive dimension");
        if (!seen.insert(f.label).second) throw LabelError("duplicate label '" + f.label + "'");
        total_ *= f.dim;
    }
}

bool Layout::has(const std::string& label) const {
    for (const auto& f : factors_)
        if (f.label == label) return true;
    return false;
}

int Layout::index_of(const std::string& label) const {
    for (int k = 0; k < size(); ++k)
        if (factors_[k].label == label) return k;
    throw LabelError("label not found: '" + label + "'");
}

std::vector<std::string> Layout::labels() const {
    std::vector<std::string> out;
    for (const auto& f : factors_) out.push_back(f.label);
    return out;
}

long Layout::stride(int k) const {
    long s = 1;
    for (int j = size() - 1; j > k; --j) s *= factors_[j].dim;
    return s;
}

Layout Layout::without(const std::vector<std::string>& labels) const {
    for (const auto& l : labels) index_of(l);
    std::vector<Factor> keep;
    for (const auto& f : factors_)
        if (std::find(labels.begin(), labels.end(), f.label) == labels.end()) keep.push_back(f);
    return Layout(keep);
}

Layout Layout::subset(const std::vector<std::string>& labels) const {
    std::vector<Factor> out;
    for (const auto& l : labels) out.push_back(factors_[index_of(l)]);
    return Layout(out);
}

Layout Layout::concat(const Layout& other) const {
    auto f = factors_;
    f.insert(f.end(), other.factors_.begin(), other.factors_.end());
    return Layout(f);
}

bool Layout::operator==(const Layout& o) const {
    if (size() != o.size()) return false;
    for (int k = 0; k < size(); ++k)
        if (factors_[k].label != o.factors_[k].label || factors_[k].dim != o.factors_[k].dim)
            return false;
    return true;
}

LabeledMatrix::LabeledMatrix(Layout layout, CMat m) : layout_(std::move(layout)), m_(std::move(m)) {
    if (m_.rows() != m_.cols() || m_.rows() != layout_.total_dim())
        throw DimensionError("matrix side " + std::to_string(m_.rows()) + "x" +
                             std::to_string(m_.cols()) + " does not match layout dimension " +
                             std::to_string(layout_.total_dim()));
}

LabeledMatrix LabeledMatrix::hermitian(Layout layout, const CMat& m) {
    if (!is_hermitian(m, 1e-8)) throw std::invalid_argument("matrix is not Hermitian");
    return LabeledMatrix(std::move(layout), herm(m));
}

bool is_hermitian(const CMat& m, double rel_tol) {
    if (m.rows() != m.cols()) return false;
    double n = m.norm();
    return (m - m.adjoint()).norm() <= rel_tol * std::max(n, 1e-300) || n == 0.0;
}

CMat herm(const CMat& m) { return 0.5 * (m + m.adjoint()); }

double min_eig(const CMat& h) {
    if (h.size() == 0) return 0.0;
    Eigen::SelfAdjointEigenSolver<CMat> es(herm(h), Eigen::EigenvaluesOnly);
    return es.eigenvalues()(0);
}

IndexSplit split_index(const Layout& layout, const std::vector<std::string>& labels) {
    std::vector<bool> sel(layout.size(), false);
    for (const auto& l : labels) sel[layout.index_of(l)] = true;
    const long D = layout.total_dim();
    IndexSplit s;
    s.inside.assign(D, 0);
    s.outside.assign(D, 0);
    for (long i = 0; i < D; ++i) {
        long rem = i;
        long in = 0;
        for (int k = layout.size() - 1; k >= 0; --k) {
            long d = layout.factors()[k].dim;
            long digit = rem % d;
            rem /= d;
            if (sel[k]) in += digit * layout.stride(k);
        }
        s.inside[i] = in;
        s.outside[i] = i - in;
    }
    return s;
}

std::vector<long> permutation_map(const Layout& from, const Layout& to) {
    if (from.size() != to.size()) throw LabelError("layouts have different factor sets");
    std::vector<long> tostride(from.size());
    for (int k = 0; k < from.size(); ++k) {
        int j = to.index_of(from.factors()[k].label);
        if (to.factors()[j].dim != from.factors()[k].dim)
            throw DimensionError("dimension mismatch on '" + from.factors()[k].label + "'");
        tostride[k] = to.stride(j);
    }
    const long D = from.total_dim();
    std::vector<long> perm(D);
    for (long i = 0; i < D; ++i) {
        long rem = i, p = 0;
        for (int k = from.size() - 1; k >= 0; --k) {
            long d = from.factors()[k].dim;
            p += (rem % d) * tostride[k];
            rem /= d;
        }
        perm[i] = p;
    }
    return perm;
}

CMat permute_matrix(const CMat& m, const Layout& from, const Layout& to) {
    auto p = permutation_map(from, to);
    const long D = from.total_dim();
    CMat out(D, D);
    for (long j = 0; j < D; ++j)
        for (long i = 0; i < D; ++i) out(p[i], p[j]) = m(i, j);
    return out;
}

CVec permute_vector(const CVec& v, const Layout& from, const Layout& to) {
    auto p = permutation_map(from, to);
    CVec out(v.size());
    for (long i = 0; i < v.size(); ++i) out(p[i]) = v(i);
    return out;
}

LabeledMatrix reorder(const LabeledMatrix& m, const std::vector<std::string>& order) {
    Layout to = m.layout().subset(order);
    if (to.size() != m.layout().size()) throw LabelError("reorder needs every label exactly once");
    return LabeledMatrix(to, permute_matrix(m.mat(), m.layout(), to));
}

CMat partial_trace(const CMat& m, const Layout& layout, const std::vector<std::string>& labels) {
    if (m.rows() != layout.total_dim()) throw DimensionError("matrix/layout mismatch");
    Layout keep = layout.without(labels);
    const long D = layout.total_dim();
    const long Dk = keep.total_dim();
    const long Dt = D / Dk;
    // offsets of kept and traced digits
    auto sp = split_index(layout, labels);
    std::vector<long> kofs, tofs;
    kofs.reserve(Dk);
    tofs.reserve(Dt);
    for (long i = 0; i < D; ++i) {
        if (sp.inside[i] == 0) kofs.push_back(sp.outside[i]);
        if (sp.outside[i] == 0) tofs.push_back(sp.inside[i]);
    }
    CMat out = CMat::Zero(Dk, Dk);
    for (long b = 0; b < Dk; ++b)
        for (long a = 0; a < Dk; ++a) {
            cplx s = 0;
            for (long t = 0; t < Dt; ++t) s += m(kofs[a] + tofs[t], kofs[b] + tofs[t]);
            out(a, b) = s;
        }
    return out;
}

LabeledMatrix partial_trace(const LabeledMatrix& m, const std::vector<std::string>& labels) {
    return LabeledMatrix(m.layout().without(labels), partial_trace(m.mat(), m.layout(), labels));
}

CMat neutralize(const CMat& m, const Layout& layout, const std::vector<std::string>& labels) {
    CMat r = partial_trace(m, layout, labels);
    const long D = layout.total_dim();
    auto sp = split_index(layout, labels);
    Layout keep = layout.without(labels);
    std::vector<long> kept_index(D);
    {
        for (long i = 0; i < D; ++i) {
            long rem = i, idx = 0, mul = 1;
            for (int k = layout.size() - 1; k >= 0; --k) {
                long d = layout.factors()[k].dim;
                long digit = rem % d;
                rem /= d;
                if (keep.has(layout.factors()[k].label)) {
                    idx += digit * mul;
                    mul *= d;
                }
            }
            kept_index[i] = idx;
        }
    }
    double dt = static_cast<double>(D / keep.total_dim());
    CMat out = CMat::Zero(D, D);
    for (long j = 0; j < D; ++j)
        for (long i = 0; i < D; ++i)
            if (sp.inside[i] == sp.inside[j]) out(i, j) = r(kept_index[i], kept_index[j]) / dt;
    return out;
}

LabeledMatrix neutralize(const LabeledMatrix& m, const std::vector<std::string>& labels) {
    return LabeledMatrix(m.layout(), neutralize(m.mat(), m.layout(), labels));
}

CMat partial_transpose(const CMat& m, const Layout& layout, const std::vector<std::string>& labels) {
    if (m.rows() != layout.total_dim()) throw DimensionError("matrix/layout mismatch");
    auto sp = split_index(layout, labels);
    const long D = layout.total_dim();
    CMat out(D, D);
    for (long j = 0; j < D; ++j)
        for (long i = 0; i < D; ++i)
            out(i, j) = m(sp.outside[i] + sp.inside[j], sp.outside[j] + sp.inside[i]);
    return out;
}

LabeledMatrix partial_transpose(const LabeledMatrix& m, const std::vector<std::string>& labels) {
    return LabeledMatrix(m.layout(), partial_transpose(m.mat(), m.layout(), labels));
}

CMat kron(const CMat& a, const CMat& b) {
    CMat out(a.rows() * b.rows(), a.cols() * b.cols());
    for (long i = 0; i < a.rows(); ++i)
        for (long j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

CVec kron(const CVec& a, const CVec& b) {
    CVec out(a.size() * b.size());
    for (long i = 0; i < a.size(); ++i) out.segment(i * b.size(), b.size()) = a(i) * b;
    return out;
}

LabeledMatrix tensor(const LabeledMatrix& a, const LabeledMatrix& b) {
    return LabeledMatrix(a.layout().concat(b.layout()), kron(a.mat(), b.mat()));
}

CMat herm_expm(const CMat& h, double t) {
    if (!is_hermitian(h, 1e-10)) throw std::invalid_argument("herm_expm: input is not Hermitian");
    Eigen::SelfAdjointEigenSolver<CMat> es(herm(h));
    CVec ph(es.eigenvalues().size());
    for (long k = 0; k < ph.size(); ++k) ph(k) = std::exp(cplx(0, -es.eigenvalues()(k) * t));
    return es.eigenvectors() * ph.asDiagonal() * es.eigenvectors().adjoint();
}

LabeledMatrix herm_expm(const LabeledMatrix& h, double t) {
    return LabeledMatrix(h.layout(), herm_expm(h.mat(), t));
}

RMat realify(const CMat& h) {
    const long n = h.rows();
    RMat r(2 * n, 2 * n);
    r.topLeftCorner(n, n) = h.real();
    r.topRightCorner(n, n) = -h.imag();
    r.bottomLeftCorner(n, n) = h.imag();
    r.bottomRightCorner(n, n) = h.real();
    return r;
}

CVec max_entangled(int d) {
    CVec v = CVec::Zero(static_cast<long>(d) * d);
    for (int k = 0; k < d; ++k) v(k * d + k) = 1.0;
    return v;
}

namespace {

struct LinkPlan {
    Layout rest;
    std::vector<long> rest_ofs;  // rest index -> offset in full layout
    std::vector<long> link_ofs;  // joint link value -> offset (digits equal within each pair)
};

LinkPlan plan_links(const Layout& layout,
                    const std::vector<std::pair<std::string, std::string>>& pairs) {
    std::vector<std::string> used;
    for (const auto& [a, b] : pairs) {
        if (layout.dim(a) != layout.dim(b))
            throw DimensionError("link between '" + a + "' and '" + b + "' needs equal dims");
        used.push_back(a);
        used.push_back(b);
    }
    LinkPlan p;
    p.rest = layout.without(used);
    const long Dr = p.rest.total_dim();
    p.rest_ofs.assign(Dr, 0);
    for (long r = 0; r < Dr; ++r) {
        long rem = r, ofs = 0;
        for (int k = p.rest.size() - 1; k >= 0; --k) {
            long d = p.rest.factors()[k].dim;
            ofs += (rem % d) * layout.stride(layout.index_of(p.rest.factors()[k].label));
            rem /= d;
        }
        p.rest_ofs[r] = ofs;
    }
    long nl = 1;
    for (const auto& pr : pairs) nl *= layout.dim(pr.first);
    p.link_ofs.assign(nl, 0);
    for (long v = 0; v < nl; ++v) {
        long rem = v, ofs = 0;
        for (int q = static_cast<int>(pairs.size()) - 1; q >= 0; --q) {
            long d = layout.dim(pairs[q].first);
            long digit = rem % d;
            rem /= d;
            ofs += digit * (layout.stride(layout.index_of(pairs[q].first)) +
                            layout.stride(layout.index_of(pairs[q].second)));
        }
        p.link_ofs[v] = ofs;
    }
    return p;
}

}  // namespace

LabeledMatrix contract_links(const LabeledMatrix& m,
                             const std::vector<std::pair<std::string, std::string>>& pairs) {
    auto p = plan_links(m.layout(), pairs);
    const long Dr = p.rest.total_dim();
    CMat out = CMat::Zero(Dr, Dr);
    for (long b = 0; b < Dr; ++b)
        for (long a = 0; a < Dr; ++a) {
            cplx s = 0;
            for (long u : p.link_ofs)
                for (long v : p.link_ofs) s += m.mat()(p.rest_ofs[a] + u, p.rest_ofs[b] + v);
            out(a, b) = s;
        }
    return LabeledMatrix(p.rest, out);
}

CVec contract_links(const CVec& v, const Layout& layout,
                    const std::vector<std::pair<std::string, std::string>>& pairs,
                    Layout* out_layout) {
    if (v.size() != layout.total_dim()) throw DimensionError("vector/layout mismatch");
    auto p = plan_links(layout, pairs);
    const long Dr = p.rest.total_dim();
    CVec out = CVec::Zero(Dr);
    for (long a = 0; a < Dr; ++a)
        for (long u : p.link_ofs) out(a) += v(p.rest_ofs[a] + u);
    if (out_layout) *out_layout = p.rest;
    return out;
}

std::vector<CMat> gell_mann(int d) {
    std::vector<CMat> g;
    g.push_back(CMat::Identity(d, d));
    const double scale = std::sqrt(d / 2.0);
    for (int j = 0; j < d; ++j)
        for (int k = j + 1; k < d; ++k) {
            CMat s = CMat::Zero(d, d), a = CMat::Zero(d, d);
            s(j, k) = s(k, j) = 1.0;
            a(j, k) = cplx(0, -1);
            a(k, j) = cplx(0, 1);
            g.push_back(scale * s);
            g.push_back(scale * a);
        }
    for (int l = 1; l < d; ++l) {
        CMat m = CMat::Zero(d, d);
        double c = std::sqrt(2.0 / (l * (l + 1.0)));
        for (int j = 0; j < l; ++j) m(j, j) = c;
        m(l, l) = -c * l;
        g.push_back(scale * m);
    }
    return g;
}

CVec mode_product(const CVec& t, const std::vector<long>& dims, int k, const CMat& a) {
    long pre = 1, post = 1;
    for (int j = 0; j < k; ++j) pre *= dims[j];
    for (size_t j = k + 1; j < dims.size(); ++j) post *= dims[j];
    const long nk = dims[k];
    if (a.cols() != nk) throw DimensionError("mode_product: size mismatch");
    const long mk = a.rows();
    CVec out(pre * mk * post);
    using RM = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    for (long p = 0; p < pre; ++p) {
        Eigen::Map<const RM> in(t.data() + p * nk * post, nk, post);
        Eigen::Map<RM> o(out.data() + p * mk * post, mk, post);
        o.noalias() = a * in;
    }
    return out;
}

ProductBasis::ProductBasis(Layout layout) : layout_(std::move(layout)) {
    const int n = layout_.size();
    const long D = layout_.total_dim();
    size_ = D * D;
    for (int k = 0; k < n; ++k) {
        int d = layout_.factors()[k].dim;
        gm_.push_back(gell_mann(d));
        CMat f(d * d, d * d), b(d * d, d * d);
        for (int a = 0; a < d * d; ++a)
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j) {
                    f(a, i * d + j) = std::conj(gm_[k][a](i, j)) / static_cast<double>(d);
                    b(i * d + j, a) = gm_[k][a](i, j);
                }
        fwd_.push_back(f);
        back_.push_back(b);
    }
    // interleaved position of matrix entry (row i, col j): digits (i_1 j_1 i_2 j_2 ...)
    inter_.assign(size_, 0);
    for (long i = 0; i < D; ++i)
        for (long j = 0; j < D; ++j) {
            long ri = i, rj = j, pos = 0, mul = 1;
            for (int k = n - 1; k >= 0; --k) {
                long d = layout_.factors()[k].dim;
                long di = ri % d, dj = rj % d;
                ri /= d;
                rj /= d;
                pos += (di * d + dj) * mul;
                mul *= d * d;
            }
            inter_[i * D + j] = pos;
        }
}

int ProductBasis::digit(long s, int k) const {
    long rem = s;
    for (int j = layout_.size() - 1; j > k; --j) {
        long d = layout_.factors()[j].dim;
        rem /= d * d;
    }
    long d = layout_.factors()[k].dim;
    return static_cast<int>(rem % (d * d));
}

CMat ProductBasis::element(long s) const {
    CMat m = CMat::Identity(1, 1);
    for (int k = 0; k < layout_.size(); ++k) m = kron(m, gm_[k][digit(s, k)]);
    return m;
}

CVec ProductBasis::coefficients(const CMat& x) const {
    const long D = dim();
    if (x.rows() != D || x.cols() != D) throw DimensionError("basis coefficients: size mismatch");
    CVec t(size_);
    for (long i = 0; i < D; ++i)
        for (long j = 0; j < D; ++j) t(inter_[i * D + j]) = x(i, j);
    std::vector<long> dims;
    for (const auto& f : layout_.factors()) dims.push_back(static_cast<long>(f.dim) * f.dim);
    for (int k = 0; k < layout_.size(); ++k) t = mode_product(t, dims, k, fwd_[k]);
    return t;
}

CMat ProductBasis::synthesize(const CVec& c) const {
    const long D = dim();
    if (c.size() != size_) throw DimensionError("basis synthesize: size mismatch");
    std::vector<long> dims;
    for (const auto& f : layout_.factors()) dims.push_back(static_cast<long>(f.dim) * f.dim);
    CVec t = c;
    for (int k = 0; k < layout_.size(); ++k) t = mode_product(t, dims, k, back_[k]);
    CMat x(D, D);
    for (long i = 0; i < D; ++i)
        for (long j = 0; j < D; ++j) x(i, j) = t(inter_[i * D + j]);
    return x;
}

CMat ProductBasis::right_multiply(const CMat& w, long s) const {
    // (W B)_{r, j} = sum_i W_{r,i} B_{i,j}; B is a Kronecker product, so apply factor by
    // factor along the column index viewed as a tensor.
    const long D = dim();
    std::vector<long> dims;
    dims.push_back(w.rows());
    for (const auto& f : layout_.factors()) dims.push_back(f.dim);
    using RM = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    RM wr = w;
    CVec t = Eigen::Map<const CVec>(wr.data(), wr.size());
    for (int k = 0; k < layout_.size(); ++k) {
        const CMat& g = gm_[k][digit(s, k)];
        t = mode_product(t, dims, k + 1, g.transpose());
    }
    RM out = Eigen::Map<const RM>(t.data(), w.rows(), D);
    return out;
}

}  // namespace qmetro
