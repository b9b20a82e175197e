#pragma once

#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "qmetro/tensor_algebra.hpp"

namespace qmetro {

// Linear matrix inequality problem over real scalar variables x:
//
//     minimize  c.x   s.t.  S_b = F0_b + sum_k x_k F_{k,b} >= 0 (Hermitian, every block b),
//                           E x = f.
//
// Hermitian matrix unknowns enter through real coordinates (see hermitian_basis or a
// ProductBasis); complex blocks are handled natively with the inner product Re Tr(A B).
struct SdpBlock {
    CMat f0;

    struct Dense {
        int var;
        CMat f;
    };
    std::vector<Dense> dense;

    // x_{vars[j]} * B_{strings[j]} placed on the diagonal sub-block [offset, offset + D).
    struct BasisTerms {
        std::shared_ptr<const ProductBasis> basis;
        long offset = 0;
        std::vector<long> strings;
        std::vector<int> vars;
    };
    std::vector<BasisTerms> basis_terms;

    long size() const { return f0.rows(); }
};

struct SdpProblem {
    int num_vars = 0;
    RVec c;                 // objective coefficients (length num_vars)
    bool maximize = false;  // maximize c.x instead
    std::vector<SdpBlock> blocks;
    RMat eq;                // E (rows x num_vars), may be empty
    RVec eq_rhs;            // f
    // -1: couples to every block; g >= 0: appears only in blocks of the same group.
    // Used to factor the normal equations block-wise; empty means all shared.
    std::vector<int> group;
    std::vector<int> block_group;  // per block, -1 if it uses shared variables only

    // Optional starting point. Z0 must be positive definite; S0 is taken as F0 + F(x0)
    // when that is positive definite and otherwise replaced by a multiple of I.
    std::optional<RVec> x0;
    std::optional<std::vector<CMat>> z0;
    std::optional<RVec> w0;

    void validate() const;  // throws DimensionError / std::invalid_argument
};

struct SdpOptions {
    double gap_tol = 1e-8;
    double feas_tol = 1e-8;
    int max_iter = 200;
    double step_fraction = 0.98;
    double divergence = 1e10;
    bool verbose = false;
};

enum class SdpStatus { Optimal, Infeasible, NumericalLimit };
std::string to_string(SdpStatus s);

struct SdpSolution {
    SdpStatus status = SdpStatus::NumericalLimit;
    RVec x;
    std::vector<CMat> S, Z;  // slack and dual matrices per block
    RVec w;                  // equality multipliers (reduced system)
    double primal = 0;       // objective in the caller's sense
    double dual = 0;
    double gap = 0;          // |primal - dual|
    double rel_gap = 0;      // gap / (1 + |primal| + |dual|)
    double primal_infeasibility = 0;
    double dual_infeasibility = 0;
    double complementarity = 0;  // sum_b Re Tr(S_b Z_b)
    int iterations = 0;
    std::vector<std::pair<double, double>> history;  // (primal, dual) per iterate, min sense
};

SdpSolution solve(const SdpProblem& p, const SdpOptions& opt = {});

// F0 + sum_k x_k F_k for one block.
CMat evaluate_block(const SdpBlock& b, const RVec& x);
// Adjoint of the block map: component k is Re Tr(F_k Y).
RVec adjoint_block(const SdpBlock& b, const CMat& y, int num_vars);

// Orthonormal basis of n x n Hermitian matrices for the inner product Re Tr(A B):
// E_jj, (E_jk + E_kj)/sqrt2, i(E_jk - E_kj)/sqrt2 for j < k, ordered by (j, k).
std::vector<CMat> hermitian_basis(int n);
// Coordinates of a Hermitian matrix in hermitian_basis(n).
RVec hermitian_coordinates(const CMat& h);
CMat hermitian_from_coordinates(const RVec& x, int n);

// Debug dump: variables, objective, blocks with dense term matrices as row-major
// [re, im] pairs, equalities. Basis terms are expanded to dense matrices.
void dump_json(const SdpProblem& p, std::ostream& os);

}  // namespace qmetro
