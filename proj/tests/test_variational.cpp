#include "support.hpp"

#include "chebmps/analysis.hpp"
#include "chebmps/variational.hpp"

#include <Eigen/Eigenvalues>

#include <sstream>

using namespace chebmps;
using namespace chebmps::testing;

namespace {

double fd_mismatch(const LocalEnvironment& env, const Tensor& a, double h = 1e-5) {
    const Tensor g = local_cost_and_gradient(env, a).gradient;
    Tensor fd(a.shape());
    for (Index i = 0; i < a.size(); ++i) {
        for (cplx dir : {cplx(1.0, 0.0), cplx(0.0, 1.0)}) {
            Tensor p = a, m = a;
            p.values()[i] += h * dir;
            m.values()[i] -= h * dir;
            const double d = (local_cost_and_gradient(env, p).cost - local_cost_and_gradient(env, m).cost) / (2 * h);
            fd.values()[i] += d * dir;
        }
    }
    return (fd.values() - g.values()).norm() / g.values().norm();
}

Mps random_product(int N, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<CVector> local;
    for (int n = 0; n < N; ++n)
        local.push_back(random_vector(2, rng));
    return from_product(local);
}

} // namespace

TEST_CASE("gradient matches finite differences") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const Model m = default_ising(6);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const Mps s = random_state(6, 4, 100 + trial);
        const int site = trial % 6;
        const double lambda = trial % 3 == 0 ? 0.0 : 2.0 * u(rng);
        const double E0 = -3.0 + 6.0 * u(rng);
        const auto env = local_environment(s, m, site, lambda, E0);
        Tensor a = Tensor::random(canonicalize(s, site).sites[site].shape(), rng);
        worst = std::max(worst, fd_mismatch(env, a));
    }
    CHECK(worst < 1e-5);
}

TEST_CASE("single-site toy against the hand formula") {
    // H = X on one site: <H^2> = 1, so C = 1 - e^2 + lambda (e - E0)^2
    LocalEnvironment env;
    env.lh = detail::trivial_env();
    env.rh = detail::trivial_env();
    env.lq = Tensor({1, 1, 1, 1});
    env.lq(0, 0, 0, 0) = 1.0;
    env.rq = env.lq;
    env.w = Tensor({1, 2, 2, 1});
    env.w(0, 0, 1, 0) = 1.0;
    env.w(0, 1, 0, 0) = 1.0;
    env.lambda = 0.7;
    env.E0 = 0.2;
    Tensor a({1, 2, 1});
    a(0, 0, 0) = cplx(0.6, 0.1);
    a(0, 1, 0) = cplx(-0.3, 0.7);
    a *= cplx(1.0 / a.norm());
    const auto c = local_cost_and_gradient(env, a);
    const cplx x0 = a(0, 0, 0), x1 = a(0, 1, 0);
    const double e = 2.0 * (std::conj(x0) * x1).real();
    CHECK(c.energy == doctest::Approx(e).epsilon(1e-14));
    CHECK(c.variance == doctest::Approx(1.0 - e * e).epsilon(1e-14));
    CHECK(c.cost == doctest::Approx(1.0 - e * e + 0.7 * (e - 0.2) * (e - 0.2)).epsilon(1e-14));
    const double k = 2.0 * (-2.0 * e + 2.0 * 0.7 * (e - 0.2));
    CHECK(std::abs(c.gradient(0, 0, 0) - k * (x1 - e * x0)) < 1e-14);
    CHECK(std::abs(c.gradient(0, 1, 0) - k * (x0 - e * x1)) < 1e-14);
    CHECK(fd_mismatch(env, a) < 1e-8);
}

TEST_CASE("eigenstates are fixed points") {
    const Model m = default_ising(8);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(dense_hamiltonian(m));
    const int k = 100;
    const double E = es.eigenvalues()(k);
    const Mps s = from_vector(es.eigenvectors().col(k), 8);

    const auto env = local_environment(s, m, 3, 0.5, E);
    const Tensor a = canonicalize(s, 3).sites[3];
    const auto c = local_cost_and_gradient(env, a);
    CHECK(c.gradient.norm() < 1e-8);
    CHECK(std::abs(c.energy - E) < 1e-9);

    VarOpts o;
    o.D = 16;
    o.E0 = E;
    o.max_sweeps = 3;
    const auto res = minimize_variance(s, m, o);
    REQUIRE(!res.trace.empty());
    for (const auto& r : res.trace)
        CHECK(r.cost <= 1e-10);
    CHECK(variance(res.state, m) <= 1e-10);
    CHECK(res.energy_constraint_met);
}

TEST_CASE("staggered ferromagnet reaches zero variance at D=1") {
    const Model m = build_staggered_heisenberg(10);
    VarOpts o;
    o.D = 1;
    o.E0 = -1.0;
    o.max_sweeps = 200;
    o.tol = 1e-12;
    const Mps s0 = random_product(10, 5);
    const auto res = minimize_variance(s0, m, o);
    CHECK(res.state.max_bond() == 1);
    CHECK(variance(res.state, m) <= 1e-10);
    CHECK(std::abs(energy(res.state, m) + 1.0) < 1e-4);
}

TEST_CASE("cost trace is non-increasing and matches the analysis contractions") {
    const Model m = default_ising(10);
    VarOpts o;
    o.D = 8;
    o.E0 = 0.0;
    o.max_sweeps = 6;
    o.seed = 3;
    const Mps s0 = product_state(10, y_plus());
    const auto res = minimize_variance(s0, m, o);
    REQUIRE(res.trace.size() >= 2);
    for (std::size_t i = 1; i < res.trace.size(); ++i)
        CHECK(res.trace[i].cost <= res.trace[i - 1].cost + 1e-10);
    CHECK(res.trace.back().variance < variance(s0, m));
    CHECK(std::abs(norm(res.state) - 1.0) < 1e-12);
    CHECK(res.state.center == 0);
    CHECK(res.state.max_bond() <= 8);
    CHECK(std::abs(res.trace.back().variance - variance(res.state, m)) < 1e-9);
    CHECK(std::abs(res.trace.back().energy - energy(res.state, m)) < 1e-9);
    CHECK(res.lambda > 0.0);

    std::ostringstream os;
    write_cost_csv(res.trace, os);
    CHECK(os.str().rfind("sweep,cost,variance,energy,seconds\n", 0) == 0);
}

TEST_CASE("invalid options") {
    const Model m = default_ising(6);
    const Mps s = random_state(6, 4, 1);
    VarOpts o;
    o.D = 2;
    CHECK_THROWS(minimize_variance(s, m, o));
    o.D = 4;
    o.tol = 1.5;
    CHECK_THROWS(minimize_variance(s, m, o));
}
