#include "support.hpp"

#include <Eigen/Eigenvalues>

#include <filesystem>
#include <cstring>

using namespace chebmps;
using namespace chebmps::testing;

namespace {

CMatrix cut_matrix(const CVector& v, int N, int cut) {
    // rows: sites 0..cut-1 (low bits), cols: the rest
    const Index dl = Index{1} << cut, dr = Index{1} << (N - cut);
    CMatrix m(dl, dr);
    for (Index i = 0; i < v.size(); ++i)
        m(i % dl, i / dl) = v(i);
    return m;
}

bool is_left_isometry(const Tensor& a) {
    const CMatrix m = a.matrix(2);
    return (m.adjoint() * m - CMatrix::Identity(m.cols(), m.cols())).norm() < 1e-10;
}

bool is_right_isometry(const Tensor& a) {
    const CMatrix m = a.matrix(1);
    return (m * m.adjoint() - CMatrix::Identity(m.rows(), m.rows())).norm() < 1e-10;
}

} // namespace

TEST_CASE("from_product builds bond-one states") {
    const Mps s = product_state(6, y_plus());
    CHECK(s.max_bond() == 1);
    CHECK(norm(s) == doctest::Approx(1.0).epsilon(1e-14));
    const Mps one = product_state(1, basis(0));
    CHECK(one.length() == 1);
    CHECK(norm(one) == doctest::Approx(1.0));
    CVector bad(2);
    bad << 1.0, 1.0;
    CHECK_THROWS_AS(product_state(3, bad), NormalizationError);
}

TEST_CASE("inner products") {
    const Mps a = product_state(5, basis(0));
    const Mps b = product_state(5, basis(1));
    CHECK(std::abs(inner(a, a) - 1.0) < 1e-14);
    CHECK(std::abs(inner(a, b)) < 1e-15);
    const Mps r1 = random_state(8, 6, 1), r2 = random_state(8, 5, 2);
    const cplx ref = to_vector(r1).dot(to_vector(r2));
    CHECK(std::abs(inner(r1, r2) - ref) < 1e-10);
    CHECK_THROWS(inner(r1, product_state(7, basis(0))));
}

TEST_CASE("canonicalize keeps the state and makes isometries") {
    Mps s = random_state(9, 7, 3);
    s.center.reset();
    for (int c : {0, 4, 8}) {
        const Mps t = canonicalize(s, c);
        CHECK(fidelity(s, t) == doctest::Approx(1.0).epsilon(1e-10));
        CHECK(std::abs(norm(t) - norm(s)) < 1e-10);
        for (int n = 0; n < c; ++n)
            CHECK(is_left_isometry(t.sites[n]));
        for (int n = c + 1; n < 9; ++n)
            CHECK(is_right_isometry(t.sites[n]));
        const Mps u = canonicalize(t, c);
        CHECK(fidelity(t, u) == doctest::Approx(1.0).epsilon(1e-12));
        // moving an existing center
        const Mps v = canonicalize(t, (c + 3) % 9);
        CHECK(fidelity(t, v) == doctest::Approx(1.0).epsilon(1e-10));
    }
    const Mps p = canonicalize(product_state(5, y_plus()), 2);
    CHECK(p.max_bond() == 1);
}

TEST_CASE("compress") {
    SUBCASE("bounded state is untouched") {
        const Mps s = random_state(8, 4, 4);
        const auto c = compress(s, 16);
        CHECK(c.discarded_weight < 1e-14);
        CHECK(fidelity(s, c.state) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(c.state.center == 0);
    }
    SUBCASE("GHZ to bond one") {
        const std::pair<cplx, Mps> parts[] = {{1.0, product_state(6, basis(0))}, {1.0, product_state(6, basis(1))}};
        const Mps ghz = direct_sum(parts);
        const auto c = compress(ghz, 1);
        CHECK(c.state.max_bond() == 1);
        // the first cut loses half the weight; later cuts have nothing left to lose
        CHECK(c.discarded_weight == doctest::Approx(0.5).epsilon(1e-12));
    }
    SUBCASE("center cut matches the optimal truncation") {
        const Mps s = random_state(10, 32, 5);
        const CVector v = to_vector(s);
        Eigen::BDCSVD<Eigen::MatrixXcd> svd(cut_matrix(v, 10, 5));
        const auto& sv = svd.singularValues();
        const double tail = sv.tail(sv.size() - 8).squaredNorm() / sv.squaredNorm();
        const auto sp = schmidt(s, 5);
        std::vector<double> vals = sp.values;
        TruncationPolicy pol{8, 0.0};
        double w = 0.0;
        choose_rank(vals, pol, &w);
        CHECK(w == doctest::Approx(tail).epsilon(1e-9));
        const auto c = compress(s, 8);
        CHECK(c.state.max_bond() <= 8);
        CHECK(fidelity(s, c.state) >= 1.0 - c.discarded_weight - 1e-9);
    }
    CHECK_THROWS(compress(product_state(3, basis(0)), 0));
}

TEST_CASE("add") {
    const Mps s = random_state(7, 5, 6);
    const std::pair<cplx, Mps> one[] = {{1.0, s}};
    CHECK(fidelity(add(one, 64), s) == doctest::Approx(1.0).epsilon(1e-12));

    const std::pair<cplx, Mps> two[] = {{1.0, product_state(6, basis(0))}, {1.0, product_state(6, basis(1))}};
    const Mps sum = add(two, 2);
    CHECK(norm(sum) * norm(sum) == doctest::Approx(2.0).epsilon(1e-12));

    const Mps a = random_state(8, 4, 7), b = random_state(8, 3, 8), c = random_state(8, 5, 9);
    const cplx ka(0.5, 1.0), kb(-2.0, 0.0), kc(0.0, 0.3);
    const std::pair<cplx, Mps> three[] = {{ka, a}, {kb, b}, {kc, c}};
    const CVector ref = ka * to_vector(a) + kb * to_vector(b) + kc * to_vector(c);
    const Mps d = direct_sum(three);
    CHECK(d.bond(4) == a.bond(4) + b.bond(4) + c.bond(4));
    CHECK((to_vector(add(three, 256)) - ref).norm() < 1e-10);

    // linearity against a probe
    const Mps x = random_state(8, 6, 10);
    const cplx lhs = inner(x, add(std::span(three).first(2), 1000));
    CHECK(std::abs(lhs - (ka * inner(x, a) + kb * inner(x, b))) < 1e-10);
    CHECK_THROWS(add(std::span<const std::pair<cplx, Mps>>{}, 4));
}

TEST_CASE("apply_mpo") {
    const Model m = default_ising(8);
    const Mps p = product_state(8, y_plus());
    CHECK(fidelity(apply_mpo(identity_mpo(8, 2), p, 8).state, p) == doctest::Approx(1.0).epsilon(1e-12));

    const Mps hp = apply_mpo_exact(m.mpo, p);
    CHECK(hp.max_bond() == m.mpo.max_bond());
    const CVector ref = matvec(m, to_vector(p));
    CHECK((to_vector(hp) - ref).norm() < 1e-10);
    const auto c = apply_mpo(m.mpo, p, 64);
    CHECK((to_vector(c.state) - ref).norm() < 1e-10);

    std::vector<CMatrix> xs(5, pauli::x());
    const Mps flipped = apply_mpo_exact(product_mpo(xs), product_state(5, basis(0)));
    CHECK(std::abs(inner(product_state(5, basis(1)), flipped) - 1.0) < 1e-14);
}

TEST_CASE("expectation values of the reference states") {
    const Model ising = default_ising(20);
    const Mps yp = product_state(20, y_plus());
    CHECK(std::abs(expectation(yp, ising.mpo)) < 1e-12);
    // J^2 (N-1) + (g^2 + h^2) N
    CHECK(expectation2(yp, ising.mpo) == doctest::Approx(19.0 + (1.05 * 1.05 + 0.25) * 20).epsilon(1e-12));

    const Model xyz = default_xyz(8);
    std::vector<CVector> z;
    for (int b : {0, 0, 1, 1, 0, 0, 1, 1})
        z.push_back(basis(b));
    CHECK(expectation(from_product(z), xyz.mpo).real() == doctest::Approx(0.9).epsilon(1e-12));

    const Model small = default_ising(10);
    const Mps r = random_state(10, 8, 11);
    const CVector v = to_vector(r);
    CHECK(expectation(r, small.mpo).real() == doctest::Approx(exact_energy(v, small)).epsilon(1e-10));
    const double var = expectation2(r, small.mpo) - std::norm(expectation(r, small.mpo));
    CHECK(var == doctest::Approx(exact_variance(v, small)).epsilon(1e-9));
    CHECK(var >= -1e-9);
}

TEST_CASE("schmidt spectra and entropies") {
    const Mps p = product_state(6, y_plus());
    for (int cut = 1; cut < 6; ++cut)
        CHECK(entropy(p, cut) == doctest::Approx(0.0));

    Tensor a({1, 2, 2}), b({2, 2, 1});
    a(0, 0, 0) = a(0, 1, 1) = 1.0 / std::sqrt(2.0);
    b(0, 0, 0) = b(1, 1, 0) = 1.0;
    Mps bell;
    bell.sites = {a, b};
    CHECK(entropy(bell, 1) == doctest::Approx(1.0).epsilon(1e-12));

    const Mps r = random_state(10, 16, 12);
    const CVector v = to_vector(r);
    const auto rho = rdm(v, 10, 0, 5);
    Eigen::SelfAdjointEigenSolver<CMatrix> es(rho.rho);
    double s = 0.0;
    for (Index i = 0; i < es.eigenvalues().size(); ++i)
        if (es.eigenvalues()(i) > 1e-300)
            s -= es.eigenvalues()(i) * std::log2(es.eigenvalues()(i));
    CHECK(entropy(r, 5) == doctest::Approx(s).epsilon(1e-9));
    const auto all = schmidt_all(r);
    REQUIRE(all.size() == 9);
    for (int cut = 1; cut < 10; ++cut)
        CHECK(entropy_bits(all[cut - 1]) == doctest::Approx(entropy(r, cut)).epsilon(1e-9));
    // entropy from the MPS rdm of the left block
    const auto rl = rdm(r, 0, 5);
    Eigen::SelfAdjointEigenSolver<CMatrix> el(rl.rho);
    double sl = 0.0;
    for (Index i = 0; i < el.eigenvalues().size(); ++i)
        if (el.eigenvalues()(i) > 1e-300)
            sl -= el.eigenvalues()(i) * std::log2(el.eigenvalues()(i));
    CHECK(sl == doctest::Approx(entropy(r, 5)).epsilon(1e-9));
    CHECK_THROWS(schmidt(r, 0));
    CHECK_THROWS(schmidt(r, 10));
}

TEST_CASE("reduced density matrices") {
    const Mps p = product_state(6, y_plus());
    const auto rho = rdm(p, 2, 3);
    CVector local = y_plus();
    CVector prod = kron(kron(CMatrix(local), CMatrix(local)), CMatrix(local));
    CHECK((rho.rho - prod * prod.adjoint()).norm() < 1e-12);
    CHECK(std::abs((rho.rho * rho.rho).trace() - 1.0) < 1e-12);

    const Mps r = random_state(10, 16, 13);
    const auto a = rdm(r, 3, 4);
    const auto b = rdm(to_vector(r), 10, 3, 4);
    CHECK((a.rho - b.rho).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((a.rho - a.rho.adjoint()).norm() < 1e-12);
    CHECK(std::abs(a.rho.trace() - 1.0) < 1e-12);
    Eigen::SelfAdjointEigenSolver<CMatrix> es(a.rho);
    CHECK(es.eigenvalues().minCoeff() >= -1e-12);
    CHECK_THROWS(rdm(r, 0, 11));
    CHECK_THROWS(rdm(r, 8, 4));
}

TEST_CASE("local expectations") {
    const Mps p = product_state(5, y_plus());
    CHECK(std::abs(local_expectation(p, pauli::y(), 2) - 1.0) < 1e-14);
    CHECK(std::abs(local_expectation(p, pauli::z(), 2)) < 1e-14);

    const Model m = default_ising(8);
    const Mps r = random_state(8, 6, 14);
    CVector v = to_vector(r);
    for (int n = 0; n < 7; ++n) {
        // single-term model evaluated on the state vector
        std::vector<CMatrix> raw(7, CMatrix::Zero(4, 4));
        raw[n] = m.terms[n];
        Model one = make_model("one", {}, raw);
        CHECK(std::abs(local_expectation(r, m.terms[n], n).real() - exact_energy(v, one)) < 1e-10);
    }
    CHECK_THROWS(local_expectation(r, pauli::z(), 8));
}

TEST_CASE("vector round trip") {
    std::mt19937_64 rng(15);
    const CVector v = random_vector(Index{1} << 9, rng);
    const Mps s = from_vector(v, 9);
    CHECK((to_vector(s) - v).norm() < 1e-12);
}

TEST_CASE("binary round trip is bit exact") {
    Mps s = random_state(7, 6, 16);
    s.log_norm = -3.25;
    s = canonicalize(s, 3);
    const auto path = std::filesystem::temp_directory_path() / "chebmps_roundtrip.mps";
    save_mps(s, path);
    const Mps t = load_mps(path);
    REQUIRE(t.length() == s.length());
    CHECK(t.center == s.center);
    CHECK(t.log_norm == s.log_norm);
    for (int n = 0; n < s.length(); ++n) {
        REQUIRE(t.sites[n].shape() == s.sites[n].shape());
        CHECK(std::memcmp(t.sites[n].data(), s.sites[n].data(), sizeof(cplx) * s.sites[n].size()) == 0);
    }
    std::filesystem::remove(path);
}

TEST_CASE("fidelity loss is bounded by the discarded weight") {
    for (int seed = 20; seed < 30; ++seed) {
        const Mps s = random_state(10, 24, seed);
        for (Index D : {2, 5, 11}) {
            const auto c = compress(s, D);
            CHECK(fidelity(s, c.state) >= 1.0 - c.discarded_weight - 1e-9);
        }
    }
}
