#include <cmath>

#include "doctest.h"
#include "qmetro/metrology_zoo.hpp"
#include "qmetro/qfi_oracle.hpp"
#include "qmetro/strategy_synthesis.hpp"
#include "test_helpers.hpp"

using namespace qmetro;
using namespace testutil;

namespace {

// |psi(phi)><psi| and its derivative for a pure family
std::pair<CMat, CMat> pure_pair(const CVec& psi, const CVec& dpsi) {
    CMat t = dpsi * psi.adjoint();
    return {psi * psi.adjoint(), t + t.adjoint()};
}

// random full-rank state family rho(phi) = U(phi) rho0 U(phi)^dag mixed with noise
std::pair<CMat, CMat> random_family(long d) {
    CMat rho = random_state(d);
    CMat g = random_hermitian(d);
    CMat drho = cplx(0, -1) * (g * rho - rho * g);
    return {rho, drho};
}

}  // namespace

TEST_CASE("SLD QFI of textbook states") {
    const double phi = 0.37;
    CVec plus(2), dplus(2);
    plus << 1, std::exp(cplx(0, phi));
    plus /= std::sqrt(2.0);
    dplus << 0, cplx(0, 1) * std::exp(cplx(0, phi));
    dplus /= std::sqrt(2.0);
    auto [r1, d1] = pure_pair(plus, dplus);
    auto a = state_qfi_sld(r1, d1);
    CHECK(std::abs(a.j_sld - 1.0) < 1e-12);
    CHECK(std::abs(a.measurement_cfi - 1.0) < 1e-10);
    CHECK(a.trace_residual < 1e-12);
    CHECK(a.drho_trace < 1e-12);
    // the SLD solves drho = (L rho + rho L) / 2
    CHECK((d1 - 0.5 * (a.sld * r1 + r1 * a.sld)).norm() < 1e-12);

    // no dependence, no information
    CMat mixed = random_state(3);
    CHECK(std::abs(state_qfi_sld(mixed, CMat::Zero(3, 3)).j_sld) < 1e-14);

    // GHZ with two qubits
    CVec ghz = CVec::Zero(4), dghz = CVec::Zero(4);
    ghz(0) = 1.0 / std::sqrt(2.0);
    ghz(3) = std::exp(cplx(0, 2 * phi)) / std::sqrt(2.0);
    dghz(3) = cplx(0, 2) * ghz(3);
    auto [r2, d2] = pure_pair(ghz, dghz);
    CHECK(std::abs(state_qfi_sld(r2, d2).j_sld - 4.0) < 1e-12);
}

TEST_CASE("measurement in the SLD eigenbasis attains the QFI") {
    for (int t = 0; t < 20; ++t) {
        auto [rho, drho] = random_family(2 + t % 4);
        auto rep = state_qfi_sld(rho, drho);
        CHECK(std::abs(rep.measurement_cfi - rep.j_sld) < 1e-8 * std::max(1.0, rep.j_sld));
        // any other projective measurement does no better
        CMat u = random_unitary(rho.rows());
        std::vector<Outcome> probs;
        for (long j = 0; j < rho.rows(); ++j) {
            CVec v = u.col(j);
            probs.push_back({(v.adjoint() * rho * v)(0, 0).real(), (v.adjoint() * drho * v)(0, 0).real()});
        }
        CHECK(cfi(probs).value <= rep.j_sld + 1e-9);
    }
}

TEST_CASE("derivative on the kernel is refused") {
    CMat rho = CMat::Zero(2, 2);
    rho(0, 0) = 1;
    CMat drho = CMat::Zero(2, 2);
    drho(0, 0) = -1;
    drho(1, 1) = 1;
    CHECK_THROWS_AS(state_qfi_sld(rho, drho), RankInstability);
}

TEST_CASE("classical Fisher information") {
    const double phi = 0.4;
    const double c = std::cos(phi), s = std::sin(phi);
    auto r = cfi({{c * c, -2 * s * c}, {s * s, 2 * s * c}});
    CHECK(!r.divergent);
    CHECK(std::abs(r.value - 4.0) < 1e-12);
    auto d = cfi({{0.0, 0.1}, {1.0, -0.1}});
    CHECK(d.divergent);
    CHECK(std::isinf(d.value));
    // zero-probability outcomes without slope are skipped
    CHECK(std::abs(cfi({{0.0, 0.0}, {1.0, 0.0}}).value) < 1e-15);
}

TEST_CASE("QFI never grows under a channel") {
    for (int t = 0; t < 20; ++t) {
        auto [rho, drho] = random_family(3);
        auto ch = random_channel(3, 2 + t % 3, 1 + t % 4);
        const double before = state_qfi_sld(rho, drho).j_sld;
        CMat r2 = herm(ch.apply(rho)), d2 = herm(ch.apply(drho));
        CHECK(state_qfi_sld(r2, d2).j_sld <= before + 1e-9 * std::max(1.0, before));
    }
}

TEST_CASE("output state is the link of the comb with the strategy") {
    auto fc = product_comb(compose(rz(0.8), amplitude_damping(0.3)), 2);
    for (auto k : {SetKind::Seq, SetKind::SWI}) {
        auto spec = StrategySetSpec::make(k, 2);
        auto s = optimal_strategy(fc, spec, task_qfi(fc, spec));
        auto out = output_state(s, fc);
        const CVec& v = s.purification;
        LabeledMatrix pp(s.purification_layout, v * v.adjoint());
        auto rho = link_product(fc.choi(), pp);
        auto drho = link_product(fc.dchoi(), pp);
        CHECK((rho.mat() - out.rho).norm() < 1e-10);
        CHECK((drho.mat() - out.drho).norm() < 1e-10);
        CHECK(std::abs(out.rho.trace() - 1.0) < 1e-9);
        CHECK(std::abs(out.drho.trace()) < 1e-9);
    }
}

TEST_CASE("verification refuses mismatched layouts") {
    auto fc = product_comb(rz(0.2), 2);
    auto spec = StrategySetSpec::make(SetKind::Seq, 2);
    auto s = optimal_strategy(fc, spec, task_qfi(fc, spec));
    CombFamily wrong = [](double phi) { return product_comb(rz(phi), 1); };
    CHECK_THROWS_AS(verify_strategy(s, wrong, 0.2, 4.0), DimensionError);
    StrategyChoi bare = s;
    bare.purified = false;
    CHECK_THROWS(output_state(bare, fc));
}
