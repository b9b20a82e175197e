#include "doctest.h"
#include "test_helpers.hpp"

using namespace qmetro;
using namespace testutil;

namespace {

// direct loop oracle: trace out the middle factor of a (a, b, c) tensor
CMat trace_middle(const CMat& m, int da, int db, int dc) {
    CMat out = CMat::Zero(da * dc, da * dc);
    for (int a = 0; a < da; ++a)
        for (int c = 0; c < dc; ++c)
            for (int a2 = 0; a2 < da; ++a2)
                for (int c2 = 0; c2 < dc; ++c2)
                    for (int b = 0; b < db; ++b)
                        out(a * dc + c, a2 * dc + c2) += m((a * db + b) * dc + c, (a2 * db + b) * dc + c2);
    return out;
}

}  // namespace

TEST_CASE("layout bookkeeping") {
    Layout l({{"a", 2}, {"b", 3}, {"c", 4}});
    CHECK(l.total_dim() == 24);
    CHECK(l.stride(0) == 12);
    CHECK(l.stride(2) == 1);
    CHECK(l.index_of("b") == 1);
    CHECK_THROWS_AS(l.index_of("z"), LabelError);
    CHECK(l.without({"b"}).total_dim() == 8);
    CHECK(l.subset({"c", "a"}).labels() == std::vector<std::string>{"c", "a"});
    CHECK_THROWS_AS(Layout({{"a", 2}, {"a", 2}}), LabelError);
    CHECK_THROWS_AS(LabeledMatrix(l, CMat::Zero(3, 3)), DimensionError);
}

TEST_CASE("partial trace matches explicit loops") {
    Layout l({{"a", 2}, {"b", 3}, {"c", 2}});
    CMat m = random_matrix(12, 12);
    CMat pt = partial_trace(m, l, {"b"});
    CHECK((pt - trace_middle(m, 2, 3, 2)).norm() < 1e-12);
    CHECK(std::abs(partial_trace(m, l, {"a", "b", "c"})(0, 0) - m.trace()) < 1e-12);
    // product operators
    CMat A = random_matrix(2, 2), B = random_matrix(3, 3), C = random_matrix(2, 2);
    CMat abc = kron(kron(A, B), C);
    CHECK((partial_trace(abc, l, {"a", "c"}) - A.trace() * C.trace() * B).norm() < 1e-10);
}

TEST_CASE("neutralize is an idempotent projection that keeps the partial trace") {
    Layout l({{"a", 2}, {"b", 3}, {"c", 2}});
    CMat m = random_hermitian(12);
    CMat n = neutralize(m, l, {"b", "c"});
    CHECK((neutralize(n, l, {"b", "c"}) - n).norm() < 1e-12);
    CHECK((partial_trace(n, l, {"b", "c"}) - partial_trace(m, l, {"b", "c"})).norm() < 1e-12);
    CMat ta = partial_trace(m, l, {"b", "c"});
    CHECK((n - kron(ta, CMat::Identity(6, 6)) / 6.0).norm() < 1e-12);
    // commuting labels
    CHECK((neutralize(neutralize(m, l, {"a"}), l, {"c"}) - neutralize(m, l, {"a", "c"})).norm() < 1e-12);
}

TEST_CASE("partial transpose on one factor") {
    Layout l({{"a", 2}, {"b", 3}});
    CMat A = random_matrix(2, 2), B = random_matrix(3, 3);
    CMat pt = partial_transpose(kron(A, B), l, {"b"});
    CHECK((pt - kron(A, CMat(B.transpose()))).norm() < 1e-12);
    CMat full = partial_transpose(kron(A, B), l, {"a", "b"});
    CHECK((full - kron(A, B).transpose()).norm() < 1e-12);
}

TEST_CASE("permutation round trip") {
    Layout l({{"a", 2}, {"b", 3}, {"c", 2}});
    Layout r = l.subset({"c", "a", "b"});
    CMat A = random_matrix(2, 2), B = random_matrix(3, 3), C = random_matrix(2, 2);
    CMat p = permute_matrix(kron(kron(A, B), C), l, r);
    CHECK((p - kron(kron(C, A), B)).norm() < 1e-12);
    CHECK((permute_matrix(p, r, l) - kron(kron(A, B), C)).norm() < 1e-12);
    CVec v = random_vector(12);
    CHECK((permute_vector(permute_vector(v, l, r), r, l) - v).norm() < 1e-12);
}

TEST_CASE("hermitian exponential is unitary and matches the series") {
    CMat h = random_hermitian(3) * 0.3;
    CMat u = herm_expm(h, 0.7);
    CHECK((u * u.adjoint() - CMat::Identity(3, 3)).norm() < 1e-12);
    CMat s = CMat::Identity(3, 3), term = CMat::Identity(3, 3);
    for (int k = 1; k < 30; ++k) {
        term = term * (cplx(0, -0.7) * h) / static_cast<double>(k);
        s += term;
    }
    CHECK((u - s).norm() < 1e-12);
}

TEST_CASE("realify preserves spectrum with doubled multiplicity") {
    CMat h = random_hermitian(4);
    RMat r = realify(h);
    Eigen::SelfAdjointEigenSolver<CMat> ec(h);
    Eigen::SelfAdjointEigenSolver<RMat> er(r);
    for (int k = 0; k < 4; ++k) {
        CHECK(std::abs(er.eigenvalues()(2 * k) - ec.eigenvalues()(k)) < 1e-10);
        CHECK(std::abs(er.eigenvalues()(2 * k + 1) - ec.eigenvalues()(k)) < 1e-10);
    }
    // PSD test agrees
    CMat p = random_psd(4);
    CHECK(Eigen::SelfAdjointEigenSolver<RMat>(realify(p)).eigenvalues().minCoeff() > -1e-10);
}

TEST_CASE("gell-mann bases are orthogonal hermitian and complete") {
    for (int d : {2, 3, 4}) {
        auto g = gell_mann(d);
        REQUIRE(g.size() == static_cast<size_t>(d * d));
        CHECK((g[0] - CMat::Identity(d, d)).norm() < 1e-14);
        for (int a = 0; a < d * d; ++a) {
            CHECK(is_hermitian(g[a]));
            for (int b = 0; b < d * d; ++b) {
                cplx ip = (g[a] * g[b]).trace();
                CHECK(std::abs(ip - (a == b ? cplx(d) : cplx(0))) < 1e-12);
            }
        }
    }
    auto p = gell_mann(2);
    CMat X(2, 2), Z(2, 2);
    X << 0, 1, 1, 0;
    Z << 1, 0, 0, -1;
    CHECK((p[1] - X).norm() < 1e-14);
    CHECK((p[3] - Z).norm() < 1e-14);
}

TEST_CASE("product basis transforms agree with explicit elements") {
    Layout l({{"a", 2}, {"b", 3}});
    ProductBasis b(l);
    CMat x = random_matrix(6, 6);
    CVec c = b.coefficients(x);
    CHECK((b.synthesize(c) - x).norm() < 1e-10);
    for (long s : {0L, 5L, 17L, 35L}) {
        CMat e = b.element(s);
        CHECK(std::abs(c(s) - (e * x).trace() / 6.0) < 1e-12);
        CMat w = random_matrix(6, 6);
        CHECK((b.right_multiply(w, s) - w * e).norm() < 1e-10);
    }
    CHECK(b.trivial_on(0, 0));
    CHECK(b.digit(17, 0) == 1);
    CHECK(b.digit(17, 1) == 8);
}

TEST_CASE("link contraction of maximally entangled pairs") {
    // <<I|_{b,c} (A_a (x) |I>><<I|_{bc}) |I>>_{bc} = d^2 A
    Layout l({{"a", 2}, {"b", 3}, {"c", 3}});
    CMat A = random_matrix(2, 2);
    CVec e = max_entangled(3);
    CMat m = kron(A, CMat(e * e.adjoint()));
    LabeledMatrix r = contract_links(LabeledMatrix(l, m), {{"b", "c"}});
    CHECK(r.layout().labels() == std::vector<std::string>{"a"});
    CHECK((r.mat() - 9.0 * A).norm() < 1e-10);
    CVec u = random_vector(2);
    Layout ol;
    CVec rv = contract_links(kron(u, e), l, {{"b", "c"}}, &ol);
    CHECK(ol.total_dim() == 2);
    CHECK((rv - 3.0 * u).norm() < 1e-10);
}
