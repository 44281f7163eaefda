#include "support.hpp"

#include "chebmps/tensor.hpp"

using namespace chebmps;

TEST_CASE("contract with identity returns the vector") {
    Tensor id({2, 2});
    id(0, 0) = 1.0;
    id(1, 1) = 1.0;
    Tensor v({2});
    v(0) = cplx(0.3, 0.1);
    v(1) = cplx(-2.0, 0.5);
    const Tensor r = contract(id, v, {{1, 0}});
    REQUIRE(r.shape() == Tensor::Shape{2});
    CHECK(std::abs(r(0) - v(0)) < 1e-15);
    CHECK(std::abs(r(1) - v(1)) < 1e-15);
}

TEST_CASE("contract matches a triple loop") {
    std::mt19937_64 rng(3);
    const Tensor a = Tensor::random({2, 3}, rng);
    const Tensor b = Tensor::random({3, 4}, rng);
    const Tensor c = contract(a, b, {{1, 0}});
    for (Index i = 0; i < 2; ++i)
        for (Index j = 0; j < 4; ++j) {
            cplx s = 0.0;
            for (Index k = 0; k < 3; ++k)
                s += a(i, k) * b(k, j);
            CHECK(std::abs(c(i, j) - s) < 1e-13);
        }
}

TEST_CASE("contract over several index pairs in any order") {
    std::mt19937_64 rng(4);
    const Tensor a = Tensor::random({2, 3, 4, 5}, rng);
    const Tensor b = Tensor::random({4, 6, 2}, rng);
    const Tensor c = contract(a, b, {{2, 0}, {0, 2}});
    REQUIRE(c.shape() == Tensor::Shape{3, 5, 6});
    for (Index i = 0; i < 3; ++i)
        for (Index j = 0; j < 5; ++j)
            for (Index k = 0; k < 6; ++k) {
                cplx s = 0.0;
                for (Index x = 0; x < 2; ++x)
                    for (Index y = 0; y < 4; ++y)
                        s += a(x, i, y, j) * b(y, k, x);
                CHECK(std::abs(c(i, j, k) - s) < 1e-12);
            }
}

TEST_CASE("contract without pairs is the outer product") {
    std::mt19937_64 rng(5);
    const Tensor a = Tensor::random({2, 3}, rng);
    const Tensor b = Tensor::random({4}, rng);
    const Tensor c = contract(a, b, std::span<const IndexPair>{});
    REQUIRE(c.size() == 24);
    CHECK(std::abs(c(1, 2, 3) - a(1, 2) * b(3)) < 1e-15);
}

TEST_CASE("contract is bilinear") {
    std::mt19937_64 rng(6);
    const Tensor a = Tensor::random({3, 4}, rng);
    const Tensor b = Tensor::random({4, 2}, rng);
    Tensor a2 = a;
    const cplx alpha(0.7, -1.3);
    a2 *= alpha;
    Tensor lhs = contract(a2, b, {{1, 0}});
    Tensor rhs = contract(a, b, {{1, 0}});
    rhs *= alpha;
    CHECK((lhs.values() - rhs.values()).norm() <= 1e-12 * rhs.norm());
}

TEST_CASE("contract rejects mismatched dimensions") {
    std::mt19937_64 rng(7);
    const Tensor a = Tensor::random({2, 3}, rng);
    const Tensor b = Tensor::random({4, 2}, rng);
    CHECK_THROWS_AS(contract(a, b, {{1, 0}}), ShapeError);
}

TEST_CASE("permuted moves indices") {
    std::mt19937_64 rng(8);
    const Tensor a = Tensor::random({2, 3, 4}, rng);
    const Tensor p = a.permuted({2, 0, 1});
    REQUIRE(p.shape() == Tensor::Shape{4, 2, 3});
    CHECK(p(3, 1, 2) == a(1, 2, 3));
}

TEST_CASE("split_truncate of a rank-one tensor") {
    std::mt19937_64 rng(9);
    const Tensor u = Tensor::random({3}, rng);
    const Tensor v = Tensor::random({4}, rng);
    const Tensor t = contract(u, v, std::span<const IndexPair>{});
    const auto sp = split_truncate(t, {0}, 1, 0.0);
    REQUIRE(sp.spectrum.values.size() == 1);
    CHECK(sp.spectrum.values[0] == doctest::Approx(t.norm()).epsilon(1e-12));
    CHECK(sp.spectrum.discarded_weight == doctest::Approx(0.0));
}

TEST_CASE("split_truncate of a full-rank matrix reconstructs it") {
    std::mt19937_64 rng(10);
    const Tensor t = Tensor::random({4, 4}, rng);
    const auto sp = split_truncate(t, {0}, 4, 0.0);
    CHECK(sp.spectrum.discarded_weight == doctest::Approx(0.0));
    CMatrix l = sp.left.matrix(1);
    CHECK((l.adjoint() * l - CMatrix::Identity(4, 4)).norm() < 1e-10);
    Eigen::VectorXd s = Eigen::Map<const Eigen::VectorXd>(sp.spectrum.values.data(), 4);
    CMatrix rec = l * s.asDiagonal() * sp.right.matrix(1);
    CHECK((rec - t.matrix(1)).norm() < 1e-10 * t.norm());
}

TEST_CASE("split_truncate error equals the discarded weight") {
    std::mt19937_64 rng(11);
    const Tensor t = Tensor::random({3, 4, 2, 5}, rng);
    const auto sp = split_truncate(t, {0, 2}, 3, 0.0);
    REQUIRE(sp.left.shape() == Tensor::Shape{3, 2, 3});
    REQUIRE(sp.right.shape() == Tensor::Shape{3, 4, 5});
    Tensor scaled = sp.left;
    for (Index i = 0; i < 6; ++i)
        for (Index k = 0; k < 3; ++k)
            scaled.matrix(2)(i, k) *= sp.spectrum.values[k];
    const Tensor rec = contract(scaled, sp.right, {{2, 0}}).permuted({0, 2, 1, 3});
    const double err = (rec.values() - t.values()).squaredNorm();
    CHECK(err == doctest::Approx(sp.spectrum.discarded_weight * t.squared_norm()).epsilon(1e-10));
    double kept = 0.0;
    for (double v : sp.spectrum.values)
        kept += v * v;
    CHECK(kept + sp.spectrum.discarded_weight * t.squared_norm() == doctest::Approx(t.squared_norm()).epsilon(1e-12));
}

TEST_CASE("split_truncate of a Bell pair") {
    Tensor t({2, 2});
    t(0, 0) = 1.0 / std::sqrt(2.0);
    t(1, 1) = 1.0 / std::sqrt(2.0);
    const auto sp = split_truncate(t, {0}, 2, 0.0);
    REQUIRE(sp.spectrum.values.size() == 2);
    CHECK(sp.spectrum.values[0] == doctest::Approx(1.0 / std::sqrt(2.0)));
    CHECK(sp.spectrum.values[1] == doctest::Approx(1.0 / std::sqrt(2.0)));
    CHECK(entropy_bits(sp.spectrum) == doctest::Approx(1.0));
}

TEST_CASE("split_truncate rejects bad partitions") {
    std::mt19937_64 rng(12);
    const Tensor t = Tensor::random({2, 3}, rng);
    CHECK_THROWS_AS(split_truncate(t, std::span<const int>{}, 2, 0.0), PartitionError);
    CHECK_THROWS_AS(split_truncate(t, {0, 1}, 2, 0.0), PartitionError);
}

TEST_CASE("choose_rank respects weight tolerance, floor and degeneracy") {
    const std::vector<double> sv{1.0, 0.5, 0.5, 0.1, 1e-16};
    double w = 0.0;
    CHECK(choose_rank(sv, {10, 0.0}, &w) == 4);
    CHECK(w < 1e-30);
    // tolerance removes the 0.1 tail only
    const double total = 1.0 + 0.25 + 0.25 + 0.01;
    CHECK(choose_rank(sv, {10, 0.011 / total}, &w) == 3);
    // cutting inside the degenerate pair is undone
    CHECK(choose_rank(sv, {10, 0.3 / total}, &w) == 3);
    // unless the cap forces it
    CHECK(choose_rank(sv, {2, 0.0}, &w) == 2);
    CHECK(w == doctest::Approx(0.26 / total));
}

TEST_CASE("gram factorization agrees with the SVD") {
    std::mt19937_64 rng(13);
    for (auto [r, c] : {std::pair<Index, Index>{40, 12}, {12, 40}}) {
        const Tensor t = Tensor::random({r, c}, rng);
        const CMatrix m = t.matrix(1);
        for (Isometry side : {Isometry::left, Isometry::right}) {
            const TruncationPolicy pol{6, 0.0, 1e-7};
            const auto a = factorize<cplx>(m, side, pol, FactorMethod::svd);
            const auto b = factorize<cplx>(m, side, pol, FactorMethod::gram);
            for (int k = 0; k < 6; ++k)
                CHECK(a.spectrum.values[k] == doctest::Approx(b.spectrum.values[k]).epsilon(1e-9));
            CHECK(a.spectrum.discarded_weight == doctest::Approx(b.spectrum.discarded_weight).epsilon(1e-9));
            const CMatrix ra = side == Isometry::left ? CMatrix(a.isometry * a.carry) : CMatrix(a.carry * a.isometry);
            const CMatrix rb = side == Isometry::left ? CMatrix(b.isometry * b.carry) : CMatrix(b.carry * b.isometry);
            CHECK((ra - rb).norm() < 1e-8 * m.norm());
        }
    }
}

TEST_CASE("entropy of a spectrum is bounded by the smaller dimension") {
    std::mt19937_64 rng(14);
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor t = Tensor::random({4, 8}, rng);
        const auto sp = split_truncate(t, {0}, 8, 0.0);
        const double s = entropy_bits(sp.spectrum);
        CHECK(s >= 0.0);
        CHECK(s <= 2.0 + 1e-12);
    }
}
