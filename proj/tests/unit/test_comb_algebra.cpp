#include "doctest.h"
#include "test_helpers.hpp"

using namespace qmetro;
using namespace testutil;

namespace {
KrausChannel identity_channel(int d) {
    KrausChannel c;
    c.kraus = {CMat::Identity(d, d)};
    return c;
}
KrausChannel compose_kraus(const KrausChannel& second, const KrausChannel& first) {
    KrausChannel c;
    for (const auto& b : second.kraus)
        for (const auto& a : first.kraus) c.kraus.push_back(b * a);
    return c;
}
}  // namespace

TEST_CASE("choi of basic channels") {
    auto id = choi_from_kraus(identity_channel(2), "1", "2");
    CHECK(id.rank() == 1);
    CVec e = max_entangled(2);
    CHECK((id.choi().mat() - e * e.adjoint()).norm() < 1e-14);
    CHECK((partial_trace(id.choi(), {"1"}).mat() - CMat::Identity(2, 2)).norm() < 1e-14);

    KrausChannel ad;
    CMat k1 = CMat::Zero(2, 2), k2 = CMat::Zero(2, 2);
    k1(0, 0) = 1;
    k2(0, 1) = 1;
    ad.kraus = {k1, k2};
    auto c = choi_from_kraus(ad, "1", "2").choi();
    Eigen::SelfAdjointEigenSolver<CMat> es(c.mat());
    CHECK(es.eigenvalues()(0) > -1e-14);
    CHECK((es.eigenvalues().array() > 1e-10).count() == 2);
    // output always |0>
    for (int i = 0; i < 2; ++i) CHECK(std::abs(c.mat()(i * 2 + 1, i * 2 + 1)) < 1e-14);
}

TEST_CASE("invalid channels are rejected") {
    KrausChannel bad;
    bad.kraus = {CMat::Identity(2, 2) * 0.9};
    CHECK_THROWS_AS(choi_from_kraus(bad), InvalidChannel);
    KrausChannel badd = identity_channel(2);
    badd.dkraus = {CMat::Identity(2, 2)};
    CHECK_THROWS_AS(badd.validate(), InvalidChannel);
}

TEST_CASE("link product reproduces channel action and composition") {
    for (int trial = 0; trial < 10; ++trial) {
        auto A = random_channel(2, 3, 2);
        auto B = random_channel(3, 2, 3);
        CMat rho = random_state(2);
        auto ca = choi_from_kraus(A, "1", "2").choi();
        auto cb = choi_from_kraus(B, "2", "3").choi();
        LabeledMatrix r(Layout({{"1", 2}}), rho);
        auto out = link_product(r, ca);
        CHECK(out.layout().labels() == std::vector<std::string>{"2"});
        CHECK((out.mat() - A.apply(rho)).norm() < 1e-12);

        auto ab = link_product(ca, cb);
        auto direct = choi_from_kraus(compose_kraus(B, A), "1", "3").choi();
        CHECK((ab.mat() - direct.mat()).norm() < 1e-12);

        // identity link
        auto id = choi_from_kraus(identity_channel(2), "0", "1").choi();
        auto ic = link_product(id, ca);
        CHECK(ic.layout().labels() == std::vector<std::string>{"0", "2"});
        CHECK((ic.mat() - ca.mat()).norm() < 1e-12);
    }
}

TEST_CASE("link product commutes up to reordering and associates") {
    for (int trial = 0; trial < 50; ++trial) {
        LabeledMatrix a(Layout({{"x", 2}, {"s", 3}}), random_hermitian(6));
        LabeledMatrix b(Layout({{"s", 3}, {"y", 2}}), random_hermitian(6));
        auto ab = link_product(a, b), ba = link_product(b, a);
        CHECK((reorder(ba, ab.layout().labels()).mat() - ab.mat()).norm() < 1e-10);
    }
    for (int trial = 0; trial < 10; ++trial) {
        auto c1 = choi_from_kraus(random_channel(2, 2, 2), "1", "2").choi();
        auto c2 = choi_from_kraus(random_channel(2, 3, 2), "2", "3").choi();
        auto c3 = choi_from_kraus(random_channel(3, 2, 2), "3", "4").choi();
        auto l = link_product(link_product(c1, c2), c3);
        auto r = link_product(c1, link_product(c2, c3));
        CHECK((l.mat() - r.mat()).norm() < 1e-10);
    }
}

TEST_CASE("comb validation") {
    auto e = random_channel(2, 2, 2);
    auto c = choi_from_kraus(e, "1", "2").choi();
    CHECK(validate_comb(c, {{"1", "2"}}).pass);
    auto cc = choi_from_kraus(e, "3", "4").choi();
    auto prod = tensor(c, cc);
    auto rep = validate_comb(prod, {{"1", "2"}, {"3", "4"}});
    CHECK(rep.pass);
    CHECK(rep.residuals.size() == 2);
    // channel with signalling from the second input back to the first output is not a comb
    auto sw = random_channel(4, 4, 1);
    LabeledMatrix sig(Layout({{"1", 2}, {"3", 2}, {"2", 2}, {"4", 2}}),
                      choi_from_kraus(sw, "a", "b").choi().mat());
    auto bad = validate_comb(reorder(sig, {"1", "2", "3", "4"}), {{"1", "2"}, {"3", "4"}});
    CHECK_FALSE(bad.pass);
    // a state prepared on the first output is a comb with trivial input
    LabeledMatrix st(Layout({{"2", 2}}), random_state(2));
    CHECK(validate_comb(st, {{"", "2"}}).pass);
    // scaled operator fails normalization
    LabeledMatrix sc(c.layout(), 1.5 * c.mat());
    CHECK_FALSE(validate_comb(sc, {{"1", "2"}}).pass);
    // |I>><<I| is the identity channel whichever wire is called the input
    CMat w = CMat::Zero(4, 4);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) w(3 * i, 3 * j) = 1;
    LabeledMatrix id(Layout({{"2", 2}, {"3", 2}}), w);
    CHECK(validate_comb(id, {{"3", "2"}}).pass);
    CHECK(validate_comb(id, {{"2", "3"}}).pass);
}

TEST_CASE("factorize reproduces the operator and its derivative") {
    for (int trial = 0; trial < 10; ++trial) {
        CMat g = random_matrix(6, 3), dg = random_matrix(6, 3);
        Layout l({{"a", 2}, {"b", 3}});
        LabeledMatrix c(l, g * g.adjoint());
        CMat d = dg * g.adjoint();
        LabeledMatrix dc(l, d + d.adjoint());
        auto fc = factorize(c, dc);
        CHECK(fc.rank() == 3);
        CHECK((fc.choi().mat() - c.mat()).norm() < 1e-10);
        CHECK((fc.dchoi().mat() - dc.mat()).norm() < 1e-8);
    }
    // rank one
    CVec v = random_vector(4);
    Layout l({{"a", 2}, {"b", 2}});
    auto fc = factorize(LabeledMatrix(l, v * v.adjoint()), LabeledMatrix(l, CMat::Zero(4, 4)));
    CHECK(fc.rank() == 1);
    CHECK(std::abs(std::abs(fc.vectors.col(0).dot(v)) - v.squaredNorm()) < 1e-10);
    // derivative leaking into the kernel
    CMat k = CMat::Zero(4, 4);
    CVec w = random_vector(4);
    w -= v * (v.dot(w) / v.squaredNorm());
    k = w * w.adjoint();
    CHECK_THROWS_AS(factorize(LabeledMatrix(l, v * v.adjoint()), LabeledMatrix(l, k)), RankInstability);
    // degenerate spectrum still exact
    CMat deg = CMat::Identity(4, 4);
    CMat dd = random_hermitian(4);
    auto f2 = factorize(LabeledMatrix(l, deg), LabeledMatrix(l, dd));
    CHECK((f2.dchoi().mat() - dd).norm() < 1e-10);
}

TEST_CASE("finite difference with Richardson") {
    auto f = [](double x) {
        CMat m(1, 1);
        m(0, 0) = std::sin(x);
        return m;
    };
    CHECK(std::abs(finite_difference(f, 0.3)(0, 0) - std::cos(0.3)) < 1e-10);
}

TEST_CASE("purification round trips") {
    Layout l({{"a", 2}, {"b", 2}});
    CMat rho = random_psd(4, 3);
    auto p = purify(LabeledMatrix(l, rho));
    CHECK(p.layout.dim("F") == 3);
    CMat back = partial_trace(CMat(p.vec * p.vec.adjoint()), p.layout, {"F"});
    CHECK((back - rho).norm() < 1e-10);
    auto mm = purify(LabeledMatrix(Layout({{"a", 2}}), CMat::Identity(2, 2) / 2.0));
    CHECK(mm.layout.dim("F") == 2);
    CVec pure = random_vector(2);
    auto pp = purify(LabeledMatrix(Layout({{"a", 2}}), pure * pure.adjoint()));
    CHECK(pp.layout.dim("F") == 1);
}
