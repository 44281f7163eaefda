#include "support.hpp"

#include "chebmps/filter.hpp"

#include <Eigen/Eigenvalues>

using namespace chebmps;
using namespace chebmps::testing;

TEST_CASE("matvec against the dense matrix") {
    const Model m = default_ising(10);
    const CMatrix h = dense_hamiltonian(m);
    std::mt19937_64 rng(1);
    const CVector u = random_vector(1024, rng), v = random_vector(1024, rng);
    CHECK((matvec(m, v) - h * v).cwiseAbs().maxCoeff() < 1e-12);
    const cplx a(0.3, -0.7);
    CHECK((matvec(m, u + a * v) - matvec(m, u) - a * matvec(m, v)).norm() < 1e-12);
    // hermiticity
    CHECK(std::abs(u.dot(matvec(m, v)) - std::conj(v.dot(matvec(m, u)))) < 1e-10);

    const Model small = default_ising(8);
    Eigen::SelfAdjointEigenSolver<CMatrix> es(dense_hamiltonian(small));
    const CVector e = es.eigenvectors().col(3);
    CHECK((matvec(small, e) - es.eigenvalues()(3) * e).norm() < 1e-10);
}

TEST_CASE("reference energies and variances") {
    const Model m = default_ising(20);
    std::vector<CVector> local(20, y_plus());
    const CVector p = product_vector(local);
    CHECK(std::abs(exact_energy(p, m)) < 1e-10);
    CHECK(exact_variance(p, m) == doctest::Approx(46.05).epsilon(1e-10));
    CHECK_THROWS(dense_hamiltonian(default_ising(13)));
}

TEST_CASE("exact Chebyshev filter") {
    const Model m = default_ising(10);
    const auto edges = spectrum_edges(m);
    const auto r = make_rescaling(m, edges, 0.0);
    std::vector<CVector> local(10, y_plus());
    const CVector p = product_vector(local);
    CHECK((exact_cheby_filter(p, m, 0, r) - p).norm() < 1e-12);

    // against the dense spectral decomposition
    Eigen::SelfAdjointEigenSolver<CMatrix> es(dense_hamiltonian(m));
    const auto kc = delta_coefficients(60);
    Eigen::VectorXd f(es.eigenvalues().size());
    for (Index i = 0; i < f.size(); ++i)
        f(i) = delta_series(kc, r.alpha * (es.eigenvalues()(i) - r.E0) / m.N);
    CVector ref = es.eigenvectors() * (f.cast<cplx>().asDiagonal() * (es.eigenvectors().adjoint() * p));
    ref.normalize();
    const CVector got = exact_cheby_filter(p, m, 60, r);
    CHECK(std::norm(ref.dot(got)) == doctest::Approx(1.0).epsilon(1e-12));

    // several orders at once
    const int orders[] = {60, 20};
    const auto both = exact_cheby_filter(p, m, orders, r);
    CHECK(std::norm(both[0].dot(got)) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::norm(both[1].dot(exact_cheby_filter(p, m, 20, r))) == doctest::Approx(1.0).epsilon(1e-12));

    // global phase commutes
    const cplx phase = std::polar(1.0, 0.9);
    CHECK(std::norm(exact_cheby_filter(phase * p, m, 60, r).dot(got)) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("propagator") {
    const Model m = default_ising(8);
    std::vector<CVector> local(8, y_plus());
    const CVector p = product_vector(local);
    CHECK(std::abs(exact_evolution_overlap(p, m, 0) - 1.0) < 1e-12);
    Eigen::SelfAdjointEigenSolver<CMatrix> es(dense_hamiltonian(m));
    const double theta = 0.37;
    const Eigen::VectorXcd ph = (cplx(0.0, theta) * es.eigenvalues().cast<cplx>()).array().exp();
    const CVector ref = es.eigenvectors() * (ph.asDiagonal() * (es.eigenvectors().adjoint() * p));
    CHECK((expm_i(m, p, theta) - ref).norm() < 1e-10);
}

TEST_CASE("cosine filter") {
    const Model m = default_ising(10);
    std::vector<CVector> local(10, y_plus());
    const CVector p = product_vector(local);
    CHECK((cosine_filter_exact(p, m, 0, 0.0) - p).norm() < 1e-12);

    Eigen::SelfAdjointEigenSolver<CMatrix> es(dense_hamiltonian(m));
    const int M = 30;
    Eigen::VectorXd f = (es.eigenvalues().array() / m.N).cos().pow(M);
    CVector ref = es.eigenvectors() * (f.cast<cplx>().asDiagonal() * (es.eigenvectors().adjoint() * p));
    ref.normalize();
    const CVector got = cosine_filter_exact(p, m, M, 0.0);
    CHECK(std::norm(ref.dot(got)) == doctest::Approx(1.0).epsilon(1e-10));

    const CVector bin = cosine_filter_binomial(p, m, M, 0.0, 2.0);
    CHECK((bin - got).norm() < 1e-3);
}

TEST_CASE("local density of states") {
    const Model m = default_ising(10);
    std::vector<CVector> local(10, y_plus());
    const CVector p = product_vector(local);
    const auto dos = local_dos_check(p, m, 40);
    CHECK(dos.total_weight == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(dos.mean == doctest::Approx(exact_energy(p, m)).epsilon(1e-10));
    CHECK(dos.ks_distance < 0.08);

    const Model field = build_ising(6, 0.0, 0.0, 1.0);
    std::vector<CVector> up(6, basis(0));
    const auto d = local_dos_check(product_vector(up), field, 10);
    CHECK(d.degenerate);
    CHECK(d.mean == doctest::Approx(6.0));
    CHECK(d.sigma == doctest::Approx(0.0));
}
