#include "support.hpp"

#include <Eigen/Eigenvalues>

using namespace chebmps;
using namespace chebmps::testing;

namespace {

// sum of the local terms embedded densely; terms[n] acts on sites n, n+1 with
// site n most significant in the local index and bit n in the global index
CMatrix dense_from_terms(const Model& m) {
    const int N = m.N;
    const Index dim = Index{1} << N;
    CMatrix h = m.offset * CMatrix::Identity(dim, dim);
    for (int n = 0; n < N; ++n) {
        const CMatrix& t = m.terms[n];
        const bool two = t.rows() == 4;
        for (Index col = 0; col < dim; ++col) {
            const int a = (col >> n) & 1;
            const int b = two ? (col >> (n + 1)) & 1 : 0;
            const int in = two ? 2 * a + b : a;
            for (int out = 0; out < t.rows(); ++out) {
                const int oa = two ? out >> 1 : out;
                const int ob = two ? out & 1 : 0;
                Index row = col & ~(Index{1} << n);
                row |= Index(oa) << n;
                if (two) {
                    row &= ~(Index{1} << (n + 1));
                    row |= Index(ob) << (n + 1);
                }
                h(row, col) += t(out, in);
            }
        }
    }
    return h;
}

CMatrix mpo_dense(const Model& m) {
    // to_dense puts site 0 least significant, like the state vectors
    return to_dense(m.mpo);
}

Eigen::VectorXd eigenvalues(const CMatrix& h) {
    Eigen::SelfAdjointEigenSolver<CMatrix> es(h, Eigen::EigenvaluesOnly);
    return es.eigenvalues();
}

double partial_trace_defect(const CMatrix& h) {
    if (h.rows() == 2)
        return std::abs(h.trace());
    // tr over the left site: sum_a h(a b, a b')
    CMatrix r = CMatrix::Zero(2, 2);
    for (int a = 0; a < 2; ++a)
        r += h.block(2 * a, 2 * a, 2, 2);
    return r.norm() + std::abs(h.trace());
}

} // namespace

TEST_CASE("Ising model structure") {
    const Model m = default_ising(10);
    CHECK(m.mpo.max_bond() == 3);
    CHECK(m.terms.size() == 10);
    CHECK(m.terms.back().rows() == 2);
    for (const auto& t : m.terms)
        CHECK(partial_trace_defect(t) < 1e-12);
    const CMatrix a = mpo_dense(m), b = dense_from_terms(m), c = dense_hamiltonian(m);
    CHECK((a - b).norm() < 1e-12 * b.norm());
    CHECK((c - b).norm() < 1e-12 * b.norm());
    CHECK((a - a.adjoint()).norm() < 1e-12);
    CHECK(hermiticity_defect(m.mpo, 3) < 1e-10);
    CHECK_THROWS(build_ising(1, 1.0, 0.0, 0.0));
}

TEST_CASE("Ising expectation in Y+ vanishes for every N") {
    for (int N : {2, 3, 7, 12}) {
        const Model m = default_ising(N);
        CHECK(std::abs(expectation(product_state(N, y_plus()), m.mpo)) < 1e-12);
    }
}

TEST_CASE("pure zz pair") {
    const Model m = build_ising(2, 1.0, 0.0, 0.0);
    const auto ev = eigenvalues(to_dense(m.mpo));
    CHECK(ev(0) == doctest::Approx(-1.0));
    CHECK(ev(1) == doctest::Approx(-1.0));
    CHECK(ev(2) == doctest::Approx(1.0));
    CHECK(ev(3) == doctest::Approx(1.0));
    CHECK((m.terms[0] - kron(pauli::z(), pauli::z())).norm() < 1e-15);
}

TEST_CASE("XYZ model structure") {
    const Model m = default_xyz(10);
    CHECK(m.mpo.max_bond() == 5);
    for (const auto& t : m.terms)
        CHECK(partial_trace_defect(t) < 1e-12);
    const CMatrix a = mpo_dense(m), b = dense_from_terms(m);
    CHECK((a - b).norm() < 1e-12 * b.norm());
    const Model h = build_xyz(2, 1.0, 1.0, 1.0, 0.0);
    CHECK(eigenvalues(to_dense(h.mpo))(0) == doctest::Approx(-3.0));
}

TEST_CASE("tracelessize") {
    const CMatrix zz = kron(pauli::z(), pauli::z());
    const std::vector<CMatrix> pure{zz, zz};
    auto t = tracelessize(pure);
    CHECK((t.terms[0] - zz).norm() < 1e-15);
    CHECK(t.terms[2].norm() < 1e-15);
    CHECK(t.offset == 0.0);

    // fields, constants and right-site parts
    std::mt19937_64 rng(4);
    std::vector<CMatrix> raw;
    for (int n = 0; n < 5; ++n) {
        CMatrix r = Tensor::random({4, 4}, rng).matrix(1);
        raw.push_back(r + r.adjoint());
    }
    t = tracelessize(raw);
    const Model m = make_model("random", {}, raw);
    for (const auto& h : t.terms)
        CHECK(partial_trace_defect(h) < 1e-12);
    // the sum is unchanged
    Model naive;
    naive.N = 6;
    naive.terms = raw;
    naive.terms.push_back(CMatrix::Zero(2, 2));
    CHECK((dense_from_terms(naive) - dense_from_terms(m)).norm() < 1e-12 * dense_from_terms(naive).norm());
    // the leftover on the last site is a single-site operator
    CHECK(t.terms.back().rows() == 2);
}

TEST_CASE("spectral edges") {
    SUBCASE("Ising N=10") {
        const Model m = default_ising(10);
        const auto ev = eigenvalues(dense_hamiltonian(m));
        const auto e = spectrum_edges(m);
        CHECK(e.E_min == doctest::Approx(ev(0)).epsilon(1e-3));
        CHECK(e.E_max == doctest::Approx(ev(ev.size() - 1)).epsilon(1e-3));
        CHECK(e.converged);
    }
    SUBCASE("XYZ N=12") {
        const Model m = default_xyz(12);
        const auto ev = eigenvalues(dense_hamiltonian(m));
        const auto e = spectrum_edges(m);
        CHECK(e.E_min == doctest::Approx(ev(0)).epsilon(1e-3));
        CHECK(e.E_max == doctest::Approx(ev(ev.size() - 1)).epsilon(1e-3));
    }
    SUBCASE("free field") {
        const Model m = build_ising(8, 0.0, 0.0, 1.0);
        const auto e = spectrum_edges(m);
        CHECK(e.E_min == doctest::Approx(-8.0).epsilon(1e-8));
        CHECK(e.E_max == doctest::Approx(8.0).epsilon(1e-8));
    }
}

TEST_CASE("rescaled operator lies inside (-1, 1)") {
    const Model m = default_ising(10);
    const auto edges = spectrum_edges(m);
    for (double E0 : {0.0, -5.0, edges.E_min}) {
        const auto r = make_rescaling(m, edges, E0);
        const auto ev = eigenvalues(to_dense(rescaled(m, r)));
        CHECK(ev(0) > -1.0);
        CHECK(ev(ev.size() - 1) < 1.0);
        const double far = std::max(std::abs(edges.E_min - E0), std::abs(edges.E_max - E0));
        CHECK(r.alpha == doctest::Approx(std::min(1.0, 0.9 * 10 / far)));
        CHECK(r.in_range);
    }
    const auto out = make_rescaling(m, edges, edges.E_max + 1.0);
    CHECK_FALSE(out.in_range);
    const auto fixed = make_rescaling(m, edges, 0.0, 0.25);
    CHECK(fixed.alpha == 0.25);
}

TEST_CASE("staggered Heisenberg") {
    const Model m = build_staggered_heisenberg(8);
    // uniform product states are eigenstates of every bond
    const Mps up = product_state(8, basis(0));
    CHECK(expectation(up, m.mpo).real() == doctest::Approx(-1.0));
    CHECK(std::abs(expectation2(up, m.mpo) - 1.0) < 1e-12);
}
