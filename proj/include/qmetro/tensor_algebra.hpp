#pragma once

#include <Eigen/Dense>
#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

namespace qmetro {

using cplx = std::complex<double>;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using RMat = Eigen::MatrixXd;
using RVec = Eigen::VectorXd;

struct LabelError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DimensionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Factor {
    std::string label;
    int dim = 1;
};

// Ordered tensor factors. Index convention used everywhere in the library:
// a basis index of the full space is the row-major (lexicographic) number of
// the per-factor digits, the first factor being the most significant digit.
class Layout {
public:
    Layout() = default;
    explicit Layout(std::vector<Factor> factors);

    const std::vector<Factor>& factors() const { return factors_; }
    int size() const { return static_cast<int>(factors_.size()); }
    long total_dim() const { return total_; }
    bool has(const std::string& label) const;
    int index_of(const std::string& label) const;
    int dim(const std::string& label) const { return factors_[index_of(label)].dim; }
    std::vector<std::string> labels() const;
    // stride of factor k in the flat index
    long stride(int k) const;

    Layout without(const std::vector<std::string>& labels) const;
    Layout subset(const std::vector<std::string>& labels) const;  // keeps given order
    Layout concat(const Layout& other) const;

    bool operator==(const Layout& o) const;
    bool operator!=(const Layout& o) const { return !(*this == o); }

private:
    std::vector<Factor> factors_;
    long total_ = 1;
};

class LabeledMatrix {
public:
    LabeledMatrix() = default;
    LabeledMatrix(Layout layout, CMat m);
    // symmetrizes (M + M^dagger)/2 after checking the drift is small
    static LabeledMatrix hermitian(Layout layout, const CMat& m);

    const Layout& layout() const { return layout_; }
    const CMat& mat() const { return m_; }
    long dim() const { return layout_.total_dim(); }

private:
    Layout layout_;
    CMat m_;
};

// Offsets of every flat index split into the part carried by `labels` and the rest.
struct IndexSplit {
    std::vector<long> inside;   // flat index -> contribution of the selected factors
    std::vector<long> outside;  // flat index -> contribution of remaining factors
};
IndexSplit split_index(const Layout& layout, const std::vector<std::string>& labels);

// Flat-index permutation: perm[i] is the position of old index i in the new layout.
std::vector<long> permutation_map(const Layout& from, const Layout& to);

CMat permute_matrix(const CMat& m, const Layout& from, const Layout& to);
CVec permute_vector(const CVec& v, const Layout& from, const Layout& to);
LabeledMatrix reorder(const LabeledMatrix& m, const std::vector<std::string>& order);

LabeledMatrix partial_trace(const LabeledMatrix& m, const std::vector<std::string>& labels);
CMat partial_trace(const CMat& m, const Layout& layout, const std::vector<std::string>& labels);

LabeledMatrix neutralize(const LabeledMatrix& m, const std::vector<std::string>& labels);
CMat neutralize(const CMat& m, const Layout& layout, const std::vector<std::string>& labels);

LabeledMatrix partial_transpose(const LabeledMatrix& m, const std::vector<std::string>& labels);
CMat partial_transpose(const CMat& m, const Layout& layout, const std::vector<std::string>& labels);

LabeledMatrix tensor(const LabeledMatrix& a, const LabeledMatrix& b);
CMat kron(const CMat& a, const CMat& b);
CVec kron(const CVec& a, const CVec& b);

// exp(-i H t) by eigendecomposition
LabeledMatrix herm_expm(const LabeledMatrix& h, double t);
CMat herm_expm(const CMat& h, double t);

// [[Re H, -Im H], [Im H, Re H]]
RMat realify(const CMat& h);

bool is_hermitian(const CMat& m, double rel_tol = 1e-12);
CMat herm(const CMat& m);  // (M + M^dagger)/2
double min_eig(const CMat& h);

// Sandwich with maximally entangled kets: (<<I|_{a1 b1} ... ) M (... |I>>_{a1 b1}),
// leaving an operator on the labels not mentioned in `pairs`.
LabeledMatrix contract_links(const LabeledMatrix& m,
                             const std::vector<std::pair<std::string, std::string>>& pairs);
// Same contraction applied to a vector: (<<I|_{pairs} (x) I) v.
CVec contract_links(const CVec& v, const Layout& layout,
                    const std::vector<std::pair<std::string, std::string>>& pairs,
                    Layout* out_layout = nullptr);

// Maximally entangled (unnormalized) vector sum_k |k>|k> on two factors of equal dimension.
CVec max_entangled(int d);

// Orthogonal Hermitian product basis B_s = G_{a1} (x) ... (x) G_{an} with G_0 = I and
// Tr(G_a G_b) = d delta_ab per factor (generalized Gell-Mann, d=2 gives I, X, Y, Z).
// Index s is the row-major number of the digits a_k in [0, d_k^2).
class ProductBasis {
public:
    ProductBasis() = default;
    explicit ProductBasis(Layout layout);

    const Layout& layout() const { return layout_; }
    long dim() const { return layout_.total_dim(); }  // D
    long size() const { return size_; }                // D^2
    int digit(long s, int k) const;
    bool trivial_on(long s, int factor) const { return digit(s, factor) == 0; }
    const CMat& factor_element(int k, int a) const { return gm_[k][a]; }

    CMat element(long s) const;
    // c_s = Tr(B_s X) / D for every s
    CVec coefficients(const CMat& x) const;
    // sum_s c_s B_s
    CMat synthesize(const CVec& c) const;
    // W * B_s without forming B_s
    CMat right_multiply(const CMat& w, long s) const;

private:
    Layout layout_;
    long size_ = 0;
    std::vector<std::vector<CMat>> gm_;
    std::vector<CMat> fwd_;   // per factor (d^2 x d^2): (i,j) -> a, conj(G_a)_{ij} / d
    std::vector<CMat> back_;  // per factor (d^2 x d^2): a -> (i,j), (G_a)_{ij}
    std::vector<long> inter_; // flat (i,j) of D x D -> interleaved tensor position
};

std::vector<CMat> gell_mann(int d);

// Apply `a` (m x n_k) along axis k of a row-major tensor with the given dims.
CVec mode_product(const CVec& t, const std::vector<long>& dims, int k, const CMat& a);

}  // namespace qmetro
