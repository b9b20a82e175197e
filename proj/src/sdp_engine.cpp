#include "qmetro/sdp_engine.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <map>

#include "json.hpp"

namespace qmetro {

std::string to_string(SdpStatus s) {
    switch (s) {
        case SdpStatus::Optimal: return "optimal";
        case SdpStatus::Infeasible: return "infeasible";
        case SdpStatus::NumericalLimit: return "numerical-limit";
    }
    return "?";
}

void SdpProblem::validate() const {
    if (num_vars < 0) throw std::invalid_argument("negative variable count");
    if (c.size() != num_vars) throw DimensionError("objective length differs from variable count");
    if (!group.empty() && static_cast<int>(group.size()) != num_vars)
        throw DimensionError("group tags must cover every variable");
    if (!block_group.empty() && block_group.size() != blocks.size())
        throw DimensionError("block group tags must cover every block");
    if (eq.rows() > 0 && (eq.cols() != num_vars || eq_rhs.size() != eq.rows()))
        throw DimensionError("equality system has inconsistent shape");
    for (size_t b = 0; b < blocks.size(); ++b) {
        const auto& bl = blocks[b];
        const long n = bl.size();
        if (bl.f0.cols() != n) throw DimensionError("block constant must be square");
        if (!is_hermitian(bl.f0, 1e-10)) throw std::invalid_argument("block constant is not Hermitian");
        const int bg = block_group.empty() ? -1 : block_group[b];
        auto check_var = [&](int v) {
            if (v < 0 || v >= num_vars) throw DimensionError("term references an undeclared variable");
            const int g = group.empty() ? -1 : group[v];
            if (g >= 0 && g != bg) throw std::invalid_argument("private variable used outside its group");
        };
        for (const auto& t : bl.dense) {
            check_var(t.var);
            if (t.f.rows() != n || t.f.cols() != n) throw DimensionError("term matrix size mismatch");
            if (!is_hermitian(t.f, 1e-10)) throw std::invalid_argument("term matrix is not Hermitian");
        }
        for (const auto& t : bl.basis_terms) {
            if (!t.basis) throw std::invalid_argument("basis term without basis");
            if (t.offset < 0 || t.offset + t.basis->dim() > n) throw DimensionError("basis term outside block");
            if (t.strings.size() != t.vars.size()) throw DimensionError("basis strings and variables differ");
            for (int v : t.vars) check_var(v);
            for (long s : t.strings)
                if (s < 0 || s >= t.basis->size()) throw DimensionError("basis string out of range");
        }
    }
    if (z0 && z0->size() != blocks.size()) throw DimensionError("initial Z has wrong block count");
    if (x0 && x0->size() != num_vars) throw DimensionError("initial x has wrong length");
}

CMat evaluate_block(const SdpBlock& b, const RVec& x) {
    CMat s = b.f0;
    for (const auto& t : b.dense) s += x(t.var) * t.f;
    for (const auto& t : b.basis_terms) {
        CVec co = CVec::Zero(t.basis->size());
        for (size_t j = 0; j < t.strings.size(); ++j) co(t.strings[j]) += x(t.vars[j]);
        const long D = t.basis->dim();
        s.block(t.offset, t.offset, D, D) += t.basis->synthesize(co);
    }
    return s;
}

namespace {

double re_trace_product(const CMat& a, const CMat& b) {
    // Re Tr(A B)
    return (a.cwiseProduct(b.transpose())).sum().real();
}

// F(v) without the constant term
CMat apply_block(const SdpBlock& b, const RVec& v) {
    CMat s = CMat::Zero(b.size(), b.size());
    for (const auto& t : b.dense) s += v(t.var) * t.f;
    for (const auto& t : b.basis_terms) {
        CVec co = CVec::Zero(t.basis->size());
        for (size_t j = 0; j < t.strings.size(); ++j) co(t.strings[j]) += v(t.vars[j]);
        const long D = t.basis->dim();
        s.block(t.offset, t.offset, D, D) += t.basis->synthesize(co);
    }
    return s;
}

void adjoint_accumulate(const SdpBlock& b, const CMat& y, RVec& out) {
    for (const auto& t : b.dense) out(t.var) += re_trace_product(t.f, y);
    for (const auto& t : b.basis_terms) {
        const long D = t.basis->dim();
        CVec co = t.basis->coefficients(y.block(t.offset, t.offset, D, D));
        for (size_t j = 0; j < t.strings.size(); ++j) out(t.vars[j]) += static_cast<double>(D) * co(t.strings[j]).real();
    }
}

// Block-arrow normal matrix: shared variables couple to everything, private groups only
// to themselves and the shared ones.
class ArrowMatrix {
public:
    ArrowMatrix(const std::vector<int>& group, int num_vars) {
        local_.resize(num_vars);
        grp_.resize(num_vars);
        int ng = 0;
        for (int v = 0; v < num_vars; ++v) ng = std::max(ng, (group.empty() ? -1 : group[v]) + 1);
        sizes_.assign(ng, 0);
        for (int v = 0; v < num_vars; ++v) {
            int g = group.empty() ? -1 : group[v];
            grp_[v] = g;
            if (g < 0) {
                local_[v] = ns_++;
                shared_.push_back(v);
            } else {
                local_[v] = sizes_[g]++;
            }
        }
        members_.resize(ng);
        for (int v = 0; v < num_vars; ++v)
            if (grp_[v] >= 0) members_[grp_[v]].push_back(v);
        mss_ = RMat::Zero(ns_, ns_);
        msg_.resize(ng);
        mgg_.resize(ng);
        for (int g = 0; g < ng; ++g) {
            msg_[g] = RMat::Zero(ns_, sizes_[g]);
            mgg_[g] = RMat::Zero(sizes_[g], sizes_[g]);
        }
    }

    void clear() {
        mss_.setZero();
        for (auto& m : msg_) m.setZero();
        for (auto& m : mgg_) m.setZero();
    }

    // adds val at (i, j) only; callers add the transposed entry themselves
    void add(int i, int j, double val) {
        const int gi = grp_[i], gj = grp_[j];
        if (gi < 0 && gj < 0) mss_(local_[i], local_[j]) += val;
        else if (gi < 0) msg_[gj](local_[i], local_[j]) += val;
        else if (gj < 0) { /* lower part of the arrow, implied by symmetry */ }
        else if (gi == gj) mgg_[gi](local_[i], local_[j]) += val;
        else throw std::logic_error("normal matrix couples two private groups");
    }

    bool factor() {
        const int ng = static_cast<int>(mgg_.size());
        llt_.assign(ng, Eigen::LLT<RMat>());
        pg_.assign(ng, RMat());
        RMat schur = mss_;
        for (int g = 0; g < ng; ++g) {
            if (!robust_llt(mgg_[g], llt_[g])) return false;
            pg_[g] = llt_[g].solve(msg_[g].transpose());
            schur.noalias() -= msg_[g] * pg_[g];
        }
        schur = (schur + schur.transpose()).eval() / 2.0;
        return ns_ == 0 || robust_llt(schur, sllt_);
    }

    RMat solve(const RMat& rhs) const {
        const int ng = static_cast<int>(mgg_.size());
        const long m = rhs.cols();
        RMat rs(ns_, m);
        for (int k = 0; k < ns_; ++k) rs.row(k) = rhs.row(shared_[k]);
        std::vector<RMat> rg(ng);
        for (int g = 0; g < ng; ++g) {
            rg[g].resize(sizes_[g], m);
            for (int k = 0; k < sizes_[g]; ++k) rg[g].row(k) = rhs.row(members_[g][k]);
        }
        RMat t = rs;
        for (int g = 0; g < ng; ++g) t.noalias() -= pg_[g].transpose() * rg[g];
        RMat xs = ns_ > 0 ? RMat(sllt_.solve(t)) : RMat(0, m);
        RMat out(rhs.rows(), m);
        for (int k = 0; k < ns_; ++k) out.row(shared_[k]) = xs.row(k);
        for (int g = 0; g < ng; ++g) {
            RMat xg = llt_[g].solve(rg[g]);
            if (ns_ > 0) xg.noalias() -= pg_[g] * xs;
            for (int k = 0; k < sizes_[g]; ++k) out.row(members_[g][k]) = xg.row(k);
        }
        return out;
    }

    RVec multiply(const RVec& v) const {
        const int ng = static_cast<int>(mgg_.size());
        RVec vs(ns_), out = RVec::Zero(v.size());
        for (int k = 0; k < ns_; ++k) vs(k) = v(shared_[k]);
        RVec os = mss_ * vs;
        for (int g = 0; g < ng; ++g) {
            RVec vg(sizes_[g]);
            for (int k = 0; k < sizes_[g]; ++k) vg(k) = v(members_[g][k]);
            os += msg_[g] * vg;
            RVec og = mgg_[g] * vg + msg_[g].transpose() * vs;
            for (int k = 0; k < sizes_[g]; ++k) out(members_[g][k]) = og(k);
        }
        for (int k = 0; k < ns_; ++k) out(shared_[k]) = os(k);
        return out;
    }

private:
    static bool robust_llt(const RMat& a, Eigen::LLT<RMat>& llt) {
        if (a.rows() == 0) return true;
        llt.compute(a);
        if (llt.info() == Eigen::Success) return true;
        const double scale = std::max(1e-300, a.diagonal().cwiseAbs().maxCoeff());
        for (double reg = 1e-14; reg < 1e-4; reg *= 100) {
            RMat b = a;
            b.diagonal().array() += reg * scale;
            llt.compute(b);
            if (llt.info() == Eigen::Success) return true;
        }
        return false;
    }

    std::vector<int> local_, grp_, sizes_, shared_;
    std::vector<std::vector<int>> members_;
    int ns_ = 0;
    RMat mss_;
    std::vector<RMat> msg_, mgg_, pg_;
    std::vector<Eigen::LLT<RMat>> llt_;
    Eigen::LLT<RMat> sllt_;
};

struct Scaling {
    CMat r;      // R
    CMat rinv;   // R^{-1}
    CMat winv;   // R^{-dag} R^{-1}
    RVec sigma;  // R^{-1} S R^{-dag} = R^dag Z R = diag(sigma)
};

bool nt_scaling(const CMat& s, const CMat& z, Scaling& out) {
    Eigen::LLT<CMat> ls(s), lz(z);
    if (ls.info() != Eigen::Success || lz.info() != Eigen::Success) return false;
    CMat LS = ls.matrixL(), LZ = lz.matrixL();
    Eigen::JacobiSVD<CMat> svd(LZ.adjoint() * LS, Eigen::ComputeFullU | Eigen::ComputeFullV);
    RVec sig = svd.singularValues();
    if (sig.minCoeff() <= 0) return false;
    const long n = s.rows();
    CMat lsinv = LS.triangularView<Eigen::Lower>().solve(CMat::Identity(n, n));
    out.sigma = sig;
    out.r = LS * svd.matrixV() * sig.cwiseSqrt().cwiseInverse().asDiagonal();
    out.rinv = sig.cwiseSqrt().asDiagonal() * svd.matrixV().adjoint() * lsinv;
    out.winv = out.rinv.adjoint() * out.rinv;
    return true;
}

// largest alpha in (0, 1] with X + alpha dX >= 0, scaled by the step fraction
double step_length(const CMat& x, const CMat& dx, double frac) {
    Eigen::LLT<CMat> l(x);
    if (l.info() != Eigen::Success) return 0.0;
    const long n = x.rows();
    CMat Linv = CMat(l.matrixL()).triangularView<Eigen::Lower>().solve(CMat::Identity(n, n));
    CMat m = herm(Linv * dx * Linv.adjoint());
    const double lmin = Eigen::SelfAdjointEigenSolver<CMat>(m, Eigen::EigenvaluesOnly).eigenvalues()(0);
    if (lmin >= 0) return 1.0;
    return std::min(1.0, -frac / lmin);
}

CMat sym(const CMat& a) { return (a + a.adjoint()) / 2.0; }

}  // namespace

RVec adjoint_block(const SdpBlock& b, const CMat& y, int num_vars) {
    RVec out = RVec::Zero(num_vars);
    adjoint_accumulate(b, y, out);
    return out;
}

std::vector<CMat> hermitian_basis(int n) {
    std::vector<CMat> out;
    const double r = 1.0 / std::sqrt(2.0);
    for (int j = 0; j < n; ++j)
        for (int k = j; k < n; ++k) {
            if (j == k) {
                CMat e = CMat::Zero(n, n);
                e(j, j) = 1;
                out.push_back(e);
            } else {
                CMat s = CMat::Zero(n, n), a = CMat::Zero(n, n);
                s(j, k) = s(k, j) = r;
                a(j, k) = cplx(0, r);
                a(k, j) = cplx(0, -r);
                out.push_back(s);
                out.push_back(a);
            }
        }
    return out;
}

RVec hermitian_coordinates(const CMat& h) {
    const int n = static_cast<int>(h.rows());
    RVec x(n * n);
    int k = 0;
    const double r2 = std::sqrt(2.0);
    for (int j = 0; j < n; ++j)
        for (int l = j; l < n; ++l) {
            if (j == l) {
                x(k++) = h(j, j).real();
            } else {
                x(k++) = r2 * h(j, l).real();
                x(k++) = r2 * h(j, l).imag();
            }
        }
    return x;
}

CMat hermitian_from_coordinates(const RVec& x, int n) {
    CMat h = CMat::Zero(n, n);
    int k = 0;
    const double r = 1.0 / std::sqrt(2.0);
    for (int j = 0; j < n; ++j)
        for (int l = j; l < n; ++l) {
            if (j == l) {
                h(j, j) = x(k++);
            } else {
                h(j, l) = r * cplx(x(k), x(k + 1));
                h(l, j) = std::conj(h(j, l));
                k += 2;
            }
        }
    return h;
}

// sum_b A_b^*(W_b A_b(.) W_b) assembled into M
void assemble_normal(const SdpProblem& p, const std::vector<CMat>& winv, ArrowMatrix& M) {
    const int nb = static_cast<int>(p.blocks.size());
    M.clear();
    for (int b = 0; b < nb; ++b) {
        const SdpBlock& bl = p.blocks[b];
        const CMat& W = winv[b];
        std::vector<CMat> Y(bl.dense.size());
        for (size_t k = 0; k < bl.dense.size(); ++k) Y[k] = W * bl.dense[k].f * W;
        for (size_t k = 0; k < bl.dense.size(); ++k)
            for (size_t l = 0; l < bl.dense.size(); ++l)
                M.add(bl.dense[k].var, bl.dense[l].var, re_trace_product(bl.dense[k].f, Y[l]));
        for (const auto& t : bl.basis_terms) {
            const long D = t.basis->dim();
            const double Dd = static_cast<double>(D);
            for (size_t k = 0; k < bl.dense.size(); ++k) {
                CVec co = t.basis->coefficients(Y[k].block(t.offset, t.offset, D, D));
                for (size_t j = 0; j < t.strings.size(); ++j) {
                    const double v = Dd * co(t.strings[j]).real();
                    M.add(bl.dense[k].var, t.vars[j], v);
                    M.add(t.vars[j], bl.dense[k].var, v);
                }
            }
            for (const auto& t2 : bl.basis_terms) {
                const long D2 = t2.basis->dim();
                CMat w12 = W.block(t.offset, t2.offset, D, D2);
                CMat w21 = W.block(t2.offset, t.offset, D2, D);
                for (size_t j2 = 0; j2 < t2.strings.size(); ++j2) {
                    CMat xm = t2.basis->right_multiply(w12, t2.strings[j2]) * w21;
                    CVec co = t.basis->coefficients(xm);
                    for (size_t j = 0; j < t.strings.size(); ++j)
                        M.add(t.vars[j], t2.vars[j2], Dd * co(t.strings[j]).real());
                }
            }
        }
    }
}

SdpSolution solve(const SdpProblem& p, const SdpOptions& opt) {
    p.validate();
    const int n = p.num_vars;
    const int nb = static_cast<int>(p.blocks.size());
    const RVec c = p.maximize ? RVec(-p.c) : p.c;

    // rank-reduce the equalities
    RMat E(0, n);
    RVec f(0);
    if (p.eq.rows() > 0) {
        Eigen::JacobiSVD<RMat> svd(p.eq, Eigen::ComputeThinU | Eigen::ComputeThinV);
        const RVec& sv = svd.singularValues();
        const double tol = 1e-12 * std::max(1.0, sv.size() ? sv(0) : 0.0);
        long k = 0;
        while (k < sv.size() && sv(k) > tol) ++k;
        E = sv.head(k).asDiagonal() * svd.matrixV().leftCols(k).transpose();
        f = svd.matrixU().leftCols(k).transpose() * p.eq_rhs;
    }
    const long m = E.rows();

    long total_dim = 0;
    for (const auto& b : p.blocks) total_dim += b.size();

    // starting point
    RVec x = p.x0 ? *p.x0 : RVec(RVec::Zero(n));
    std::vector<CMat> S(nb), Z(nb);
    double f0norm = 0;
    for (int b = 0; b < nb; ++b) f0norm = std::max(f0norm, p.blocks[b].f0.cwiseAbs().maxCoeff());
    for (int b = 0; b < nb; ++b) {
        const long nn = p.blocks[b].size();
        CMat s = evaluate_block(p.blocks[b], x);
        Eigen::LLT<CMat> l(s);
        S[b] = (l.info() == Eigen::Success && min_eig(s) > 1e-8) ? s : CMat(CMat::Identity(nn, nn) * (1.0 + f0norm));
        if (p.z0) Z[b] = (*p.z0)[b];
        else Z[b] = CMat::Identity(nn, nn) * (1.0 + c.cwiseAbs().maxCoeff());
    }
    RVec w = (p.w0 && p.w0->size() == m) ? *p.w0 : RVec(RVec::Zero(m));

    ArrowMatrix M(p.group, n);
    // Gram matrix of the constraint map, used to keep dZ on the dual affine set
    ArrowMatrix gram(p.group, n);
    bool gram_ok = false;
    {
        std::vector<CMat> eye(nb);
        for (int b = 0; b < nb; ++b) eye[b] = CMat::Identity(p.blocks[b].size(), p.blocks[b].size());
        assemble_normal(p, eye, gram);
        gram_ok = gram.factor();
    }
    // Small problems factor the scaled operator by QR instead of forming the normal
    // matrix; this keeps the conditioning at kappa(B) rather than kappa(B)^2 and
    // lets the iterates get closer to degenerate optima.
    long op_rows = 0;
    for (const auto& b : p.blocks) op_rows += 2 * b.size() * b.size();
    const bool use_qr = static_cast<double>(op_rows) * n * n <= 2e9;
    std::vector<std::vector<std::pair<int, CMat>>> columns(nb);
    if (use_qr) {
        for (int b = 0; b < nb; ++b) {
            const SdpBlock& bl = p.blocks[b];
            std::map<int, CMat> acc;
            auto slot = [&](int v) -> CMat& {
                auto it = acc.find(v);
                if (it == acc.end()) it = acc.emplace(v, CMat::Zero(bl.size(), bl.size())).first;
                return it->second;
            };
            for (const auto& t : bl.dense) slot(t.var) += t.f;
            for (const auto& t : bl.basis_terms) {
                const long D = t.basis->dim();
                for (size_t j = 0; j < t.strings.size(); ++j) {
                    CVec co = CVec::Zero(t.basis->size());
                    co(t.strings[j]) = 1.0;
                    slot(t.vars[j]).block(t.offset, t.offset, D, D) += t.basis->synthesize(co);
                }
            }
            for (auto& [v, f] : acc) columns[b].emplace_back(v, std::move(f));
        }
    }
    Eigen::HouseholderQR<RMat> qr;
    RMat qr_r;

    SdpSolution sol;
    int stalls = 0;

    auto residuals = [&](std::vector<CMat>& rp, RVec& rd, RVec& re) {
        rp.resize(nb);
        rd = c;
        for (int b = 0; b < nb; ++b) {
            rp[b] = evaluate_block(p.blocks[b], x) - S[b];
            RVec a = RVec::Zero(n);
            adjoint_accumulate(p.blocks[b], Z[b], a);
            rd -= a;
        }
        if (m > 0) {
            rd -= E.transpose() * w;
            re = f - E * x;
        } else {
            re = RVec(0);
        }
    };

    auto record = [&](const std::vector<CMat>& rp, const RVec& rd, const RVec& re) {
        double pobj = c.dot(x);
        double dobj = (m > 0 ? f.dot(w) : 0.0);
        double comp = 0, rpn = 0;
        for (int b = 0; b < nb; ++b) {
            dobj -= re_trace_product(p.blocks[b].f0, Z[b]);
            comp += re_trace_product(S[b], Z[b]);
            rpn += rp[b].squaredNorm();
        }
        sol.history.push_back({pobj, dobj});
        sol.gap = std::abs(pobj - dobj);
        sol.rel_gap = sol.gap / (1.0 + std::abs(pobj) + std::abs(dobj));
        sol.complementarity = comp;
        sol.primal_infeasibility = std::max(std::sqrt(rpn) / (1.0 + f0norm),
                                            re.size() ? re.norm() / (1.0 + f.norm()) : 0.0);
        sol.dual_infeasibility = rd.norm() / (1.0 + c.norm());
        sol.primal = p.maximize ? -pobj : pobj;
        sol.dual = p.maximize ? -dobj : dobj;
    };

    std::vector<CMat> rp;
    RVec rd, re;
    std::vector<Scaling> sc(nb);
    for (int it = 0; it <= opt.max_iter; ++it) {
        residuals(rp, rd, re);
        record(rp, rd, re);
        sol.iterations = it;
        if (opt.verbose)
            std::cerr << "it " << it << " p " << sol.primal << " d " << sol.dual << " gap " << sol.rel_gap
                      << " pinf " << sol.primal_infeasibility << " dinf " << sol.dual_infeasibility << "\n";
        // the complementarity term also has to be small, otherwise a lucky crossing of
        // an infeasible primal/dual pair could look converged
        const double comp_rel = sol.complementarity / (1.0 + std::abs(sol.primal) + std::abs(sol.dual));
        if (sol.rel_gap <= opt.gap_tol && comp_rel <= 10 * opt.gap_tol && sol.primal_infeasibility <= opt.feas_tol &&
            sol.dual_infeasibility <= opt.feas_tol) {
            sol.status = SdpStatus::Optimal;
            break;
        }
        double znorm = 0;
        for (int b = 0; b < nb; ++b) znorm = std::max(znorm, Z[b].cwiseAbs().maxCoeff());
        if (x.size() && x.cwiseAbs().maxCoeff() > opt.divergence) {
            sol.status = SdpStatus::Infeasible;
            break;
        }
        if (znorm > opt.divergence) {
            sol.status = SdpStatus::Infeasible;  // dual diverging: the LMI side is empty or unbounded
            break;
        }
        if (it == opt.max_iter) break;

        bool ok = true;
        for (int b = 0; b < nb && ok; ++b) ok = nt_scaling(S[b], Z[b], sc[b]);
        if (!ok) break;

        std::function<RMat(const RMat&)> msolve;
        bool qr_ok = false;
        if (use_qr) {
            RMat B = RMat::Zero(op_rows, n);
            long row = 0;
            for (int b = 0; b < nb; ++b) {
                const long nn = p.blocks[b].size();
                for (const auto& [v, f] : columns[b]) {
                    CMat g = sc[b].rinv * f * sc[b].rinv.adjoint();
                    for (long j = 0; j < nn; ++j)
                        for (long i = 0; i < nn; ++i) {
                            B(row + 2 * (j * nn + i), v) = g(i, j).real();
                            B(row + 2 * (j * nn + i) + 1, v) = g(i, j).imag();
                        }
                }
                row += 2 * nn * nn;
            }
            qr.compute(B);
            qr_r = qr.matrixQR().topRows(n).triangularView<Eigen::Upper>();
            const RVec dg = qr_r.diagonal().cwiseAbs();
            // a rank-deficient operator goes through the regularized normal matrix instead
            qr_ok = dg.allFinite() && dg.minCoeff() > 1e-13 * dg.maxCoeff();
            if (qr_ok)
                msolve = [&](const RMat& rhs) {
                    RMat t = qr_r.transpose().triangularView<Eigen::Lower>().solve(rhs);
                    return RMat(qr_r.triangularView<Eigen::Upper>().solve(t));
                };
        }
        if (!qr_ok) {
            std::vector<CMat> winv(nb);
            for (int b = 0; b < nb; ++b) winv[b] = sc[b].winv;
            assemble_normal(p, winv, M);
            if (!M.factor()) break;
            msolve = [&](const RMat& rhs) { return M.solve(rhs); };
        }
        RMat Y;
        Eigen::LDLT<RMat> kfac;
        if (m > 0) {
            Y = msolve(E.transpose());
            RMat K = E * Y;
            kfac.compute((K + K.transpose()) / 2.0);
        }

        // Newton direction for a complementarity target given through `target`
        auto direction = [&](const std::vector<CMat>& target, RVec& dx, RVec& dw, std::vector<CMat>& dS,
                             std::vector<CMat>& dZ) {
            std::vector<CMat> G(nb), T(nb);
            RVec g = -rd;
            for (int b = 0; b < nb; ++b) {
                const RVec& s = sc[b].sigma;
                const long nn = s.size();
                T[b].resize(nn, nn);
                for (long i = 0; i < nn; ++i)
                    for (long j = 0; j < nn; ++j) T[b](i, j) = 2.0 * target[b](i, j) / (s(i) + s(j));
                G[b] = sc[b].rinv.adjoint() * T[b] * sc[b].rinv - sc[b].winv * rp[b] * sc[b].winv;
                adjoint_accumulate(p.blocks[b], G[b], g);
            }
            // KKT solve  M dx - E^T dw = g,  E dx = re  with two refinement sweeps
            auto kkt = [&](const RVec& r1, const RVec& r2, RVec& ox, RVec& ow) {
                RVec base = msolve(r1).col(0);
                if (m > 0) {
                    ow = kfac.solve(r2 - E * base);
                    ox = base + Y * ow;
                } else {
                    ow = RVec(0);
                    ox = base;
                }
            };
            // the refinement residual uses the operator itself, not the assembled matrix,
            // so rounding in M does not leak into the dual residual
            auto normal_apply = [&](const RVec& v) {
                RVec out = RVec::Zero(n);
                for (int b = 0; b < nb; ++b)
                    adjoint_accumulate(p.blocks[b], CMat(sc[b].winv * apply_block(p.blocks[b], v) * sc[b].winv), out);
                return out;
            };
            kkt(g, re, dx, dw);
            double last = std::numeric_limits<double>::infinity();
            for (int sweep = 0; sweep < 8; ++sweep) {
                RVec r1 = g - normal_apply(dx);
                RVec r2 = re;
                if (m > 0) {
                    r1 += E.transpose() * dw;
                    r2 -= E * dx;
                }
                const double res = r1.norm() + r2.norm();
                if (res >= 0.5 * last || res <= 1e-15 * (1.0 + g.norm())) break;
                last = res;
                RVec cx, cw;
                kkt(r1, r2, cx, cw);
                dx += cx;
                if (m > 0) dw += cw;
            }
            dS.resize(nb);
            dZ.resize(nb);
            for (int b = 0; b < nb; ++b) {
                dS[b] = herm(apply_block(p.blocks[b], dx) + rp[b]);
                dZ[b] = herm(sc[b].rinv.adjoint() * T[b] * sc[b].rinv - sc[b].winv * dS[b] * sc[b].winv);
            }
            // dZ loses digits to cancellation when S is badly conditioned; remove the
            // part that violates A^*(dZ) + E^T dw = rd with the fixed Gram matrix
            if (gram_ok) {
                RVec t = -rd;
                for (int b = 0; b < nb; ++b) adjoint_accumulate(p.blocks[b], dZ[b], t);
                if (m > 0) t += E.transpose() * dw;
                RVec delta = gram.solve(t).col(0);
                for (int b = 0; b < nb; ++b) dZ[b] = herm(dZ[b] - apply_block(p.blocks[b], delta));
            }
        };

        double mu = 0;
        for (int b = 0; b < nb; ++b) mu += re_trace_product(S[b], Z[b]);
        mu /= static_cast<double>(std::max<long>(1, total_dim));

        // predictor
        std::vector<CMat> target(nb);
        for (int b = 0; b < nb; ++b) target[b] = -CMat(sc[b].sigma.array().square().matrix().asDiagonal());
        RVec dxa, dwa;
        std::vector<CMat> dSa, dZa;
        direction(target, dxa, dwa, dSa, dZa);
        double ap = 1, ad = 1;
        for (int b = 0; b < nb; ++b) {
            ap = std::min(ap, step_length(S[b], dSa[b], 1.0));
            ad = std::min(ad, step_length(Z[b], dZa[b], 1.0));
        }
        double mua = 0;
        for (int b = 0; b < nb; ++b) mua += re_trace_product(S[b] + ap * dSa[b], Z[b] + ad * dZa[b]);
        mua /= static_cast<double>(std::max<long>(1, total_dim));
        const double ratio = std::clamp(mua / mu, 0.0, 1.0);
        const double expo = std::max(1.0, 3.0 * std::min(ap, ad) * std::min(ap, ad));
        const double sigma = std::pow(ratio, expo);

        // corrector
        for (int b = 0; b < nb; ++b) {
            CMat ds = sc[b].rinv * dSa[b] * sc[b].rinv.adjoint();
            CMat dzt = sc[b].r.adjoint() * dZa[b] * sc[b].r;
            target[b] = sigma * mu * CMat::Identity(sc[b].sigma.size(), sc[b].sigma.size()) -
                        CMat(sc[b].sigma.array().square().matrix().asDiagonal()) - sym(ds * dzt);
        }
        RVec dx, dw;
        std::vector<CMat> dS, dZ;
        direction(target, dx, dw, dS, dZ);
        ap = 1;
        ad = 1;
        for (int b = 0; b < nb; ++b) {
            ap = std::min(ap, step_length(S[b], dS[b], opt.step_fraction));
            ad = std::min(ad, step_length(Z[b], dZ[b], opt.step_fraction));
        }
        if (opt.verbose) std::cerr << "   mu " << mu << " sigma " << sigma << " ap " << ap << " ad " << ad << "\n";
        if (std::max(ap, ad) < 1e-10) {
            if (++stalls > 3) break;
        } else {
            stalls = 0;
        }
        x += ap * dx;
        for (int b = 0; b < nb; ++b) {
            S[b] = herm(S[b] + ap * dS[b]);
            Z[b] = herm(Z[b] + ad * dZ[b]);
        }
        if (m > 0) w += ad * dw;
    }

    sol.x = x;
    sol.S = S;
    sol.Z = Z;
    sol.w = w;
    return sol;
}

void dump_json(const SdpProblem& p, std::ostream& os) {
    using nlohmann::json;
    auto mat = [](const CMat& a) {
        json rows = json::array();
        for (long i = 0; i < a.rows(); ++i) {
            json r = json::array();
            for (long j = 0; j < a.cols(); ++j) r.push_back({a(i, j).real(), a(i, j).imag()});
            rows.push_back(r);
        }
        return rows;
    };
    json j;
    j["format"] = "qmetro-lmi";
    j["version"] = 1;
    j["description"] = "minimize c.x subject to F0_b + sum_k x_k F_kb >= 0 and E x = f; "
                       "matrices are row-major lists of [re, im] pairs";
    j["num_vars"] = p.num_vars;
    j["sense"] = p.maximize ? "max" : "min";
    j["c"] = std::vector<double>(p.c.data(), p.c.data() + p.c.size());
    json blocks = json::array();
    for (const auto& b : p.blocks) {
        json jb;
        jb["size"] = b.size();
        jb["f0"] = mat(b.f0);
        std::map<int, CMat> terms;
        for (const auto& t : b.dense) {
            auto it = terms.find(t.var);
            if (it == terms.end()) terms[t.var] = t.f;
            else it->second += t.f;
        }
        for (const auto& t : b.basis_terms) {
            const long D = t.basis->dim();
            for (size_t k = 0; k < t.strings.size(); ++k) {
                CMat f = CMat::Zero(b.size(), b.size());
                f.block(t.offset, t.offset, D, D) = t.basis->element(t.strings[k]);
                auto it = terms.find(t.vars[k]);
                if (it == terms.end()) terms[t.vars[k]] = f;
                else it->second += f;
            }
        }
        json jt = json::array();
        for (const auto& [v, f] : terms) jt.push_back({{"var", v}, {"matrix", mat(f)}});
        jb["terms"] = jt;
        blocks.push_back(jb);
    }
    j["blocks"] = blocks;
    json eq = json::array();
    for (long r = 0; r < p.eq.rows(); ++r) {
        std::vector<double> row(p.eq.cols());
        for (long k = 0; k < p.eq.cols(); ++k) row[k] = p.eq(r, k);
        eq.push_back({{"row", row}, {"rhs", p.eq_rhs(r)}});
    }
    j["equalities"] = eq;
    os << j.dump(1) << "\n";
}

}  // namespace qmetro
