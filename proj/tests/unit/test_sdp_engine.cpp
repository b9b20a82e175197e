#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "qmetro/sdp_engine.hpp"
#include "test_helpers.hpp"

using namespace qmetro;
using namespace testutil;

namespace {

// min lambda s.t. lambda I - A >= 0
SdpProblem eigen_problem(const CMat& a) {
    SdpProblem p;
    p.num_vars = 1;
    p.c = RVec::Ones(1);
    SdpBlock b;
    b.f0 = -a;
    b.dense.push_back({0, CMat::Identity(a.rows(), a.rows())});
    p.blocks.push_back(b);
    return p;
}

// optimize Re Tr(C rho) over rho >= 0 with Re Tr(A_i rho) = b_i
SdpProblem density_problem(const CMat& cost, const std::vector<CMat>& as, const std::vector<double>& bs,
                           bool maximize, bool real_embedding = false) {
    const int n = static_cast<int>(cost.rows());
    auto basis = hermitian_basis(n);
    SdpProblem p;
    p.num_vars = n * n;
    p.maximize = maximize;
    p.c.resize(n * n);
    SdpBlock b;
    b.f0 = real_embedding ? CMat(CMat::Zero(2 * n, 2 * n)) : CMat(CMat::Zero(n, n));
    for (int k = 0; k < n * n; ++k) {
        p.c(k) = (cost * basis[k]).trace().real();
        b.dense.push_back({k, real_embedding ? CMat(realify(basis[k]).cast<cplx>()) : basis[k]});
    }
    p.blocks.push_back(b);
    p.eq.resize(static_cast<long>(as.size()), n * n);
    p.eq_rhs.resize(static_cast<long>(as.size()));
    for (size_t i = 0; i < as.size(); ++i) {
        for (int k = 0; k < n * n; ++k) p.eq(static_cast<long>(i), k) = (as[i] * basis[k]).trace().real();
        p.eq_rhs(static_cast<long>(i)) = bs[i];
    }
    return p;
}

struct RandomInstance {
    CMat cost;
    std::vector<CMat> as;
    std::vector<double> bs;
};

RandomInstance random_instance(int n, int neq) {
    RandomInstance r;
    r.cost = random_hermitian(n);
    CMat rho0 = random_state(n);
    r.as.push_back(CMat::Identity(n, n));
    r.bs.push_back(1.0);
    for (int i = 1; i < neq; ++i) {
        r.as.push_back(random_hermitian(n));
        r.bs.push_back((r.as.back() * rho0).trace().real());
    }
    return r;
}

// projection onto density matrices: eigenvalue projection on the simplex
CMat project_density(const CMat& x) {
    Eigen::SelfAdjointEigenSolver<CMat> es(herm(x));
    RVec v = es.eigenvalues();
    const long n = v.size();
    RVec s = v;
    std::sort(s.data(), s.data() + n, std::greater<double>());
    double cum = 0, theta = 0;
    for (long k = 0; k < n; ++k) {
        cum += s(k);
        double t = (cum - 1.0) / static_cast<double>(k + 1);
        if (s(k) - t > 0) theta = t;
    }
    RVec lam = (v.array() - theta).cwiseMax(0.0);
    return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().adjoint();
}

// independent path: augmented Lagrangian with accelerated projected gradient
double penalty_gradient_solve(const RandomInstance& r) {
    const long n = r.cost.rows();
    CMat rho = CMat::Identity(n, n) / static_cast<double>(n);
    std::vector<double> y(r.as.size(), 0.0);
    const double beta = 20.0;
    double L = 0;
    for (size_t i = 1; i < r.as.size(); ++i) L += r.as[i].squaredNorm();
    const double step = 1.0 / (beta * L + 1e-12);
    for (int outer = 0; outer < 200; ++outer) {
        CMat z = rho, prev = rho;
        double t = 1;
        for (int inner = 0; inner < 3000; ++inner) {
            CMat g = r.cost;
            for (size_t i = 1; i < r.as.size(); ++i) {
                double viol = (r.as[i] * z).trace().real() - r.bs[i];
                g += (y[i] + beta * viol) * r.as[i];
            }
            CMat nx = project_density(z - step * g);
            double tn = (1 + std::sqrt(1 + 4 * t * t)) / 2;
            z = nx + ((t - 1) / tn) * (nx - prev);
            prev = nx;
            t = tn;
        }
        rho = prev;
        for (size_t i = 1; i < r.as.size(); ++i) y[i] += beta * ((r.as[i] * rho).trace().real() - r.bs[i]);
    }
    return (r.cost * rho).trace().real();
}

}  // namespace

TEST_CASE("hermitian coordinates round trip and are orthonormal") {
    auto b = hermitian_basis(3);
    REQUIRE(b.size() == 9);
    for (size_t i = 0; i < b.size(); ++i)
        for (size_t j = 0; j < b.size(); ++j)
            CHECK(std::abs((b[i] * b[j]).trace().real() - (i == j ? 1.0 : 0.0)) < 1e-14);
    CMat h = random_hermitian(4);
    CHECK((hermitian_from_coordinates(hermitian_coordinates(h), 4) - h).norm() < 1e-13);
}

TEST_CASE("largest eigenvalue as an SDP") {
    for (int t = 0; t < 10; ++t) {
        CMat a = random_hermitian(5);
        auto sol = solve(eigen_problem(a));
        CHECK(sol.status == SdpStatus::Optimal);
        CHECK(sol.rel_gap <= 1e-8);
        double ref = Eigen::SelfAdjointEigenSolver<CMat>(a).eigenvalues().maxCoeff();
        CHECK(std::abs(sol.primal - ref) < 1e-7);
    }
}

TEST_CASE("maximal expectation over density matrices") {
    for (int t = 0; t < 10; ++t) {
        CMat h = random_hermitian(4);
        auto sol = solve(density_problem(h, {CMat::Identity(4, 4)}, {1.0}, true));
        CHECK(sol.status == SdpStatus::Optimal);
        CHECK(sol.rel_gap <= 1e-8);
        double ref = Eigen::SelfAdjointEigenSolver<CMat>(h).eigenvalues().maxCoeff();
        CHECK(std::abs(sol.primal - ref) < 1e-7);
        CMat rho = hermitian_from_coordinates(sol.x, 4);
        CHECK(min_eig(rho) > -1e-8);
        CHECK(std::abs(rho.trace() - 1.0) < 1e-8);
    }
}

TEST_CASE("agreement with an independent first-order method") {
    for (int t = 0; t < 2; ++t) {
        auto r = random_instance(6, 3);
        auto sol = solve(density_problem(r.cost, r.as, r.bs, false));
        REQUIRE(sol.status == SdpStatus::Optimal);
        double ref = penalty_gradient_solve(r);
        CHECK(std::abs(sol.primal - ref) < 1e-6);
    }
}

TEST_CASE("weak duality along a feasible path") {
    for (int t = 0; t < 10; ++t) {
        CMat a = random_hermitian(5);
        SdpProblem p = eigen_problem(a);
        // strictly feasible x and a Z with Tr Z = c, so every iterate stays feasible
        p.x0 = RVec::Constant(1, a.norm() + 1.0);
        p.z0 = std::vector<CMat>{CMat::Identity(5, 5) / 5.0};
        auto sol = solve(p);
        CHECK(sol.status == SdpStatus::Optimal);
        REQUIRE(sol.history.size() > 2);
        for (const auto& [pr, du] : sol.history) CHECK(pr >= du - 1e-9);
    }
}

TEST_CASE("objective invariant under orthogonal reparameterization") {
    for (int t = 0; t < 5; ++t) {
        auto r = random_instance(4, 2);
        auto p = density_problem(r.cost, r.as, r.bs, false);
        auto base = solve(p);
        REQUIRE(base.status == SdpStatus::Optimal);
        // x = Q y
        Eigen::HouseholderQR<RMat> qr(RMat::Random(p.num_vars, p.num_vars));
        RMat Q = qr.householderQ();
        SdpProblem q = p;
        q.c = Q.transpose() * p.c;
        q.eq = p.eq * Q;
        q.blocks[0].dense.clear();
        for (int j = 0; j < p.num_vars; ++j) {
            CMat f = CMat::Zero(4, 4);
            for (int k = 0; k < p.num_vars; ++k) f += Q(k, j) * p.blocks[0].dense[k].f;
            q.blocks[0].dense.push_back({j, f});
        }
        auto other = solve(q);
        REQUIRE(other.status == SdpStatus::Optimal);
        CHECK(std::abs(other.primal - base.primal) <= 2e-8 * (1 + std::abs(base.primal)));
    }
}

TEST_CASE("complex problems equal their real embeddings") {
    for (int t = 0; t < 20; ++t) {
        auto r = random_instance(4, 3);
        auto cs = solve(density_problem(r.cost, r.as, r.bs, false));
        auto rs = solve(density_problem(r.cost, r.as, r.bs, false, true));
        REQUIRE(cs.status == SdpStatus::Optimal);
        REQUIRE(rs.status == SdpStatus::Optimal);
        CHECK(std::abs(cs.primal - rs.primal) < 1e-7 * (1 + std::abs(cs.primal)));
        // every block iterate of the embedding keeps the doubled-spectrum form
        for (long i = 0; i < rs.S[0].rows(); ++i) CHECK(std::abs(rs.S[0](i, i).imag()) < 1e-12);
    }
}

TEST_CASE("block-arrow factorization matches the dense one") {
    // two density matrices sharing an objective scale variable s:
    // min s  s.t.  s I - A_g - rho_g ... expressed with private rho_g and shared s
    const int n = 3;
    auto hb = hermitian_basis(n);
    CMat a1 = random_hermitian(n), a2 = random_hermitian(n);
    auto build = [&](bool grouped) {
        SdpProblem p;
        p.num_vars = 1 + 2 * n * n;
        p.c = RVec::Zero(p.num_vars);
        p.c(0) = 1;
        CMat as[2] = {a1, a2};
        for (int g = 0; g < 2; ++g) {
            // s I - rho_g - A_g >= 0 and rho_g >= 0 in one block (diagonal pieces)
            SdpBlock b;
            b.f0 = CMat::Zero(2 * n, 2 * n);
            b.f0.topLeftCorner(n, n) = -as[g];
            CMat e = CMat::Zero(2 * n, 2 * n);
            e.topLeftCorner(n, n) = CMat::Identity(n, n);
            b.dense.push_back({0, e});
            for (int k = 0; k < n * n; ++k) {
                CMat f = CMat::Zero(2 * n, 2 * n);
                f.topLeftCorner(n, n) = -hb[k];
                f.bottomRightCorner(n, n) = hb[k];
                b.dense.push_back({1 + g * n * n + k, f});
            }
            p.blocks.push_back(b);
        }
        // Tr rho_1 + Tr rho_2 = 1
        p.eq = RMat::Zero(1, p.num_vars);
        for (int g = 0; g < 2; ++g)
            for (int k = 0; k < n * n; ++k) p.eq(0, 1 + g * n * n + k) = hb[k].trace().real();
        p.eq_rhs = RVec::Ones(1);
        if (grouped) {
            p.group.assign(p.num_vars, -1);
            for (int g = 0; g < 2; ++g)
                for (int k = 0; k < n * n; ++k) p.group[1 + g * n * n + k] = g;
            p.block_group = {0, 1};
        }
        return p;
    };
    auto d = solve(build(false));
    auto g = solve(build(true));
    REQUIRE(d.status == SdpStatus::Optimal);
    REQUIRE(g.status == SdpStatus::Optimal);
    CHECK(std::abs(d.primal - g.primal) < 1e-7);
    CHECK(d.iterations == g.iterations);
}

TEST_CASE("basis terms agree with dense terms") {
    Layout l({{"a", 2}, {"b", 2}});
    auto basis = std::make_shared<const ProductBasis>(l);
    CMat h = random_hermitian(4);
    // max Tr(rho H), rho = I/4 + sum x_s B_s
    SdpProblem pb;
    pb.num_vars = 15;
    pb.maximize = true;
    pb.c.resize(15);
    SdpBlock blk;
    blk.f0 = CMat::Zero(5, 5);
    blk.f0.bottomRightCorner(4, 4) = CMat::Identity(4, 4) / 4.0;
    blk.f0(0, 0) = 1.0;  // an extra harmless scalar in front
    SdpBlock::BasisTerms bt;
    bt.basis = basis;
    bt.offset = 1;
    for (int s = 1; s < 16; ++s) {
        bt.strings.push_back(s);
        bt.vars.push_back(s - 1);
        pb.c(s - 1) = (basis->element(s) * h).trace().real();
    }
    blk.basis_terms.push_back(bt);
    pb.blocks.push_back(blk);
    SdpProblem pd = pb;
    pd.blocks[0].basis_terms.clear();
    for (int s = 1; s < 16; ++s) {
        CMat f = CMat::Zero(5, 5);
        f.bottomRightCorner(4, 4) = basis->element(s);
        pd.blocks[0].dense.push_back({s - 1, f});
    }
    auto sb = solve(pb), sd = solve(pd);
    REQUIRE(sb.status == SdpStatus::Optimal);
    REQUIRE(sd.status == SdpStatus::Optimal);
    double ref = Eigen::SelfAdjointEigenSolver<CMat>(h).eigenvalues().maxCoeff() - h.trace().real() / 4.0;
    CHECK(std::abs(sb.primal - ref) < 1e-7);
    CHECK(std::abs(sb.primal - sd.primal) < 1e-8);
    CHECK(sb.iterations == sd.iterations);
}

TEST_CASE("infeasible and malformed problems") {
    // x >= 1 and -x >= 0 cannot hold together
    SdpProblem p;
    p.num_vars = 1;
    p.c = RVec::Ones(1);
    SdpBlock b;
    b.f0 = CMat::Zero(2, 2);
    b.f0(0, 0) = -1;
    CMat f = CMat::Zero(2, 2);
    f(0, 0) = 1;
    f(1, 1) = -1;
    b.dense.push_back({0, f});
    p.blocks.push_back(b);
    auto sol = solve(p);
    CHECK(sol.status != SdpStatus::Optimal);

    SdpProblem bad = eigen_problem(random_hermitian(3));
    bad.blocks[0].dense[0].var = 4;
    CHECK_THROWS_AS(solve(bad), DimensionError);
    SdpProblem nh = eigen_problem(random_hermitian(3));
    nh.blocks[0].f0(0, 1) += 1.0;
    CHECK_THROWS_AS(solve(nh), std::invalid_argument);
}

TEST_CASE("json dump lists every term") {
    auto p = density_problem(random_hermitian(2), {CMat::Identity(2, 2)}, {1.0}, true);
    std::ostringstream os;
    dump_json(p, os);
    auto j = nlohmann::json::parse(os.str());
    CHECK(j["num_vars"] == 4);
    CHECK(j["sense"] == "max");
    CHECK(j["blocks"][0]["terms"].size() == 4);
    CHECK(j["blocks"][0]["f0"].size() == 2);
    CHECK(j["equalities"].size() == 1);
}
