#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "qmetro/comb_algebra.hpp"
#include "qmetro/tensor_algebra.hpp"

namespace qmetro {

enum class SetKind { Par, Seq, SWI, Sup, ICO };

std::string to_string(SetKind k);
SetKind set_kind_from_string(const std::string& s);  // case-insensitive "par", "seq", ...

// Label of H_i (1-based) in every process layout.
std::string slot(int i);
// Layout H_1 ... H_{2N} with the given dims (size 2N).
Layout process_layout(const std::vector<int>& dims);

struct StrategySetSpec {
    SetKind kind = SetKind::Seq;
    int N = 1;
    std::vector<int> dims;                // d_1 ... d_{2N}
    std::vector<std::vector<int>> perms;  // 1-based channel order per branch

    // SWI and Sup get all N! orders (lexicographic); Seq gets the identity order.
    static StrategySetSpec make(SetKind kind, int N, int d = 2);
    static StrategySetSpec make(SetKind kind, const std::vector<int>& dims);
    // Seq restricted to one specific order of the channels.
    static StrategySetSpec sequential_order(const std::vector<int>& order, const std::vector<int>& dims);

    int branches() const { return static_cast<int>(perms.size()); }
    Layout layout() const { return process_layout(dims); }
    double prod_odd() const;   // prod d_{2i-1}
    double prod_even() const;  // prod d_{2i}
};

std::vector<std::vector<int>> permutations_lex(int N);

// Sum of weighted neutralizations: sum_j coef_j * _{labels_j} X = 0.
struct NeutralTerm {
    double coef;
    std::vector<std::string> labels;
};

struct AffineConstraint {
    enum class Kind { Neutral, Trace, Sandwich, LinkedProduct, Support } kind = Kind::Neutral;
    std::vector<NeutralTerm> terms;                            // Neutral
    double trace = 0;                                          // Trace
    std::vector<std::pair<std::string, std::string>> links;    // Sandwich, LinkedProduct
    std::string in_label, out_label;                           // Sandwich, LinkedProduct
    std::vector<long> support;                                 // Support: allowed basis strings
    bool support_has_identity = true;
};

struct AffineSpace {
    Layout layout;
    std::vector<AffineConstraint> constraints;
    std::vector<int> branch;  // permutation tag (empty when not branch structured)
    CMat canonical;           // a feasible element

    // largest Frobenius violation over the constraints
    double residual(const CMat& x) const;
    bool is_diagonal() const;  // every constraint is Neutral, Trace or Support
    // traceless basis strings allowed by the Neutral / Support constraints
    std::vector<long> allowed_strings(const ProductBasis& basis) const;
    double trace_value() const;
};

std::vector<AffineSpace> dual_space(const StrategySetSpec& spec);
std::vector<AffineSpace> primal_space(const StrategySetSpec& spec);

// Coordinate description of one branch used by the solvers: elements are
// identity_coef * I + sum_{s in allowed} x_s B_s over `basis`.
struct CoordinateSpace {
    std::shared_ptr<const ProductBasis> basis;
    std::vector<long> allowed;
    double identity_coef = 0;  // fixed value of the I coefficient
    std::vector<int> branch;
    // SWI branches are reduced onto (in, out) after contracting the identity links.
    bool reduced = false;
    std::vector<std::pair<std::string, std::string>> links;
    std::string in_label, out_label;

    CMat element(const RVec& x) const;
};

std::vector<CoordinateSpace> dual_coordinates(const StrategySetSpec& spec);
// Cone of the primal space per branch: the identity coefficient is left free.
std::vector<CoordinateSpace> primal_coordinates(const StrategySetSpec& spec);

// Identity links used by the SWITCH order pi: pairs (2 pi(i), 2 pi(i+1) - 1).
std::vector<std::pair<std::string, std::string>> switch_links(const std::vector<int>& perm);

// rho_{2pi(1)-1} (x) |I>><<I|_{links} (x) I_{2pi(N)} on H_1..H_2N.
CMat switch_branch_operator(const StrategySetSpec& spec, const std::vector<int>& perm, const CMat& rho);

struct SwitchTemplate {
    Layout layout;  // C, T, H_1..H_2N, F_T, F_C
    CVec vec;
};
SwitchTemplate switch_template(int N, int d);

LabeledMatrix ocb_process();  // marginal on H_1..H_4
LabeledMatrix ocb_witness();
double causal_witness_value(const LabeledMatrix& w, const LabeledMatrix& c);

}  // namespace qmetro
