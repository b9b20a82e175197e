#include <cmath>

#include "doctest.h"
#include "qmetro/metrology_zoo.hpp"
#include "qmetro/task_qfi.hpp"
#include "test_helpers.hpp"

using namespace qmetro;
using namespace testutil;

namespace {

const SetKind kAllSets[] = {SetKind::Par, SetKind::Seq, SetKind::SWI, SetKind::Sup, SetKind::ICO};

KrausChannel random_signal_channel(double phi) {
    // random noise followed by a z rotation; random_channel has no derivative
    auto noise = random_channel(2, 2, 2);
    noise.dkraus.clear();
    for (auto& k : noise.kraus) noise.dkraus.push_back(CMat::Zero(k.rows(), k.cols()));
    return compose(rz(phi), noise);
}

FactorizedComb random_comb(int N, int d, int r) {
    FactorizedComb fc;
    std::vector<int> dims(2 * N, d);
    fc.layout = process_layout(dims);
    fc.vectors = random_matrix(fc.layout.total_dim(), r);
    fc.dvectors = random_matrix(fc.layout.total_dim(), r);
    return fc;
}

double lambda_of(const FactorizedComb& fc, SetKind k, int N) {
    auto r = task_qfi(fc, StrategySetSpec::make(k, N));
    REQUIRE(r.ok());
    return r.value;
}

// ||sum_i dK_i(h)^dag dK_i(h)||_op with dK(h) = dK - i sum_j h_ij K_j
double channel_bound(const KrausChannel& ch, const CMat& h) {
    const size_t r = ch.kraus.size();
    CMat a = CMat::Zero(ch.din(), ch.din());
    for (size_t i = 0; i < r; ++i) {
        CMat k = ch.dkraus[i];
        for (size_t j = 0; j < r; ++j) k -= cplx(0, 1) * h(i, j) * ch.kraus[j];
        a += k.adjoint() * k;
    }
    Eigen::SelfAdjointEigenSolver<CMat> es(a, Eigen::EigenvaluesOnly);
    return 4.0 * es.eigenvalues().maxCoeff();
}

}  // namespace

TEST_CASE("performance operator matches its defining product") {
    auto ch = compose(rz(0.3), amplitude_damping(0.25));
    auto fc = product_comb(ch, 1);
    CMat h = random_hermitian(fc.rank());
    auto om = performance_operator(fc, HermitianGauge{h});
    CMat x = fc.dvectors - cplx(0, 1) * fc.vectors * h;
    CMat expect = 4.0 * (x * x.adjoint()).transpose();
    CHECK((om.mat() - expect).norm() < 1e-12);
    CHECK(min_eig(om.mat()) > -1e-12);
    // unitary with h = 0: the trace of Omega is 4 ||dK||_F^2
    auto u = product_comb(rz(0.7), 1);
    auto ou = performance_operator(u, HermitianGauge{CMat::Zero(1, 1)});
    CHECK(std::abs(ou.mat().trace().real() - 4.0 * 0.25 * 2) < 1e-12);
}

TEST_CASE("Schur block is PSD exactly when lambda Q dominates Omega") {
    for (int t = 0; t < 50; ++t) {
        auto fc = random_comb(1, 2, 2);
        CMat h = random_hermitian(2);
        CMat q = random_psd(4) + 0.1 * CMat::Identity(4, 4);
        CMat om = performance_operator(fc, HermitianGauge{h}).mat();
        Eigen::SelfAdjointEigenSolver<CMat> qs(q);
        CMat qi = qs.eigenvectors() * qs.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
                  qs.eigenvectors().adjoint();
        Eigen::SelfAdjointEigenSolver<CMat> es(herm(qi * om * qi), Eigen::EigenvaluesOnly);
        const double lstar = es.eigenvalues().maxCoeff();
        CHECK(min_eig(herm(schur_block(lstar * (1 + 1e-6) + 1e-9, fc, HermitianGauge{h}, q))) > -1e-9);
        CHECK(min_eig(herm(schur_block(lstar * (1 - 1e-3), fc, HermitianGauge{h}, q))) < 0);
    }
}

TEST_CASE("product comb equals the tensor product of channel Chois") {
    auto a = compose(rz(0.4), amplitude_damping(0.3));
    auto b = compose(rz(0.4), bit_flip(0.2));
    auto fc = product_comb({a, b});
    CHECK(fc.layout == process_layout({2, 2, 2, 2}));
    auto ca = choi_from_kraus(a, slot(1), slot(2));
    auto cb = choi_from_kraus(b, slot(3), slot(4));
    CMat expect = kron(ca.choi().mat(), cb.choi().mat());
    CHECK((fc.choi().mat() - expect).norm() < 1e-12);
    CMat dexpect = kron(ca.dchoi().mat(), cb.choi().mat()) + kron(ca.choi().mat(), cb.dchoi().mat());
    CHECK((fc.dchoi().mat() - dexpect).norm() < 1e-12);
    auto rep = validate_comb(fc.choi(), {{slot(1), slot(2)}, {slot(3), slot(4)}});
    CHECK(rep.pass);
}

TEST_CASE("unitary phase gives Heisenberg scaling for every set") {
    CHECK(std::abs(lambda_of(product_comb(rz(0.2), 1), SetKind::Seq, 1) - 1.0) < 1e-6);
    auto fc = product_comb(rz(0.9), 2);
    for (auto k : kAllSets) CHECK(std::abs(lambda_of(fc, k, 2) - 4.0) < 1e-6);
}

TEST_CASE("complete amplitude damping erases the parameter") {
    auto fc = product_comb(compose(rz(M_PI / 2), amplitude_damping(1.0)), 2);
    for (auto k : kAllSets) {
        auto r = task_qfi(fc, StrategySetSpec::make(k, 2));
        CHECK(r.ok());
        CHECK(std::abs(r.value) < 1e-8);
    }
}

TEST_CASE("set inclusions order the task QFI") {
    for (int t = 0; t < 3; ++t) {
        auto ch = random_signal_channel(0.6);
        auto fc = product_comb(ch, 2);
        double v[5];
        for (int i = 0; i < 5; ++i) v[i] = lambda_of(fc, kAllSets[i], 2);
        const double tol = 1e-6 * std::max(1.0, v[4]);
        CHECK(v[0] <= v[1] + tol);  // Par <= Seq
        CHECK(v[1] <= v[3] + tol);  // Seq <= Sup
        CHECK(v[2] <= v[3] + tol);  // SWI <= Sup
        CHECK(v[3] <= v[4] + tol);  // Sup <= ICO
    }
}

TEST_CASE("task QFI ignores the Kraus frame") {
    auto fc = product_comb(compose(rz(0.5), amplitude_damping(0.3)), 2);
    const double base = lambda_of(fc, SetKind::Seq, 2);
    CMat u = random_unitary(fc.rank());
    FactorizedComb rot = fc;
    rot.vectors = fc.vectors * u;
    rot.dvectors = fc.dvectors * u;
    CHECK(std::abs(lambda_of(rot, SetKind::Seq, 2) - base) < 1e-6 * base);
    // splitting a vector into two equal halves keeps the same Choi operator
    FactorizedComb dup = fc;
    dup.vectors.conservativeResize(Eigen::NoChange, fc.rank() + 1);
    dup.dvectors.conservativeResize(Eigen::NoChange, fc.rank() + 1);
    dup.vectors.col(0) = fc.vectors.col(0) / std::sqrt(2.0);
    dup.dvectors.col(0) = fc.dvectors.col(0) / std::sqrt(2.0);
    dup.vectors.col(fc.rank()) = dup.vectors.col(0);
    dup.dvectors.col(fc.rank()) = dup.dvectors.col(0);
    CHECK((dup.choi().mat() - fc.choi().mat()).norm() < 1e-12);
    CHECK(std::abs(lambda_of(dup, SetKind::Seq, 2) - base) < 1e-6 * base);
}

TEST_CASE("vanishing Kraus direction with a derivative is refused") {
    auto fc = product_comb(rz(0.3), 1);
    FactorizedComb bad = fc;
    bad.vectors.conservativeResize(Eigen::NoChange, 2);
    bad.dvectors.conservativeResize(Eigen::NoChange, 2);
    bad.vectors.col(1).setZero();
    bad.dvectors.col(1) = fc.vectors.col(0);
    CHECK_THROWS_AS(task_qfi(bad, StrategySetSpec::make(SetKind::Par, 1)), RankInstability);
}

TEST_CASE("single use agrees with a direct scan of the channel bound") {
    // J = 4 min_h ||sum dK(h)^dag dK(h)||, minimized by direct search over h
    for (auto ch : {compose(rz(0.4), phase_flip(0.2)), compose(rz(1.1), amplitude_damping(0.35)),
                    compose(rz(0.2), bit_flip(0.15))}) {
        const size_t r = ch.kraus.size();
        const long nx = static_cast<long>(r * r);
        RVec x = RVec::Zero(nx);
        auto f = [&](const RVec& y) { return channel_bound(ch, hermitian_from_coordinates(y, static_cast<int>(r))); };
        // the bound is convex but not smooth; coordinate moves alone stall on its kinks
        std::vector<RVec> dirs;
        for (long j = 0; j < nx; ++j) dirs.push_back(RVec::Unit(nx, j));
        std::normal_distribution<double> nd;
        for (int k = 0; k < 40; ++k) {
            RVec e(nx);
            for (long j = 0; j < nx; ++j) e(j) = nd(rng());
            dirs.push_back(e / e.norm());
        }
        double best = f(x);
        for (double step = 1.0; step > 1e-10; step *= 0.5) {
            bool moved = true;
            while (moved) {
                moved = false;
                for (const auto& d : dirs)
                    for (double s : {step, -step}) {
                        RVec y = x + s * d;
                        const double v = f(y);
                        if (v < best - 1e-15) {
                            best = v;
                            x = y;
                            moved = true;
                        }
                    }
            }
        }
        auto fc = product_comb(ch, 1);
        for (auto k : {SetKind::Par, SetKind::Seq, SetKind::ICO}) {
            const double lam = lambda_of(fc, k, 1);
            CHECK(std::abs(lam - best) < 1e-4 * std::max(1.0, best));
        }
    }
    // dephasing: (1 - 2p)^2
    CHECK(std::abs(lambda_of(product_comb(compose(rz(0.4), phase_flip(0.2)), 1), SetKind::Par, 1) - 0.36) < 1e-6);
}

TEST_CASE("more damping never helps") {
    double prev = 1e9;
    for (double p : {0.0, 0.2, 0.4, 0.6, 0.8}) {
        const double v = lambda_of(product_comb(compose(rz(M_PI / 2), amplitude_damping(p)), 2), SetKind::Seq, 2);
        CHECK(v <= prev + 1e-7);
        prev = v;
    }
}

TEST_CASE("dual certificate and result bookkeeping") {
    auto fc = product_comb(compose(rz(M_PI / 2), amplitude_damping(0.4)), 2);
    for (auto k : kAllSets) {
        auto spec = StrategySetSpec::make(k, 2);
        auto r = task_qfi(fc, spec);
        REQUIRE(r.ok());
        CHECK(r.certificate_min_eig > -1e-7);
        CHECK(static_cast<int>(r.q_opt.size()) == spec.branches());
        CHECK(static_cast<int>(r.dual_blocks.size()) == spec.branches());
        CHECK(is_hermitian(r.h_opt.h, 1e-10));
    }
}

TEST_CASE("layout mismatch is rejected") {
    auto fc = product_comb(rz(0.1), 1);
    CHECK_THROWS_AS(task_qfi(fc, StrategySetSpec::make(SetKind::Seq, 2)), DimensionError);
}
