#include "chebmps/variational.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <random>
#include <stdexcept>

namespace chebmps {

namespace {

Tensor trivial_env2() {
    Tensor e({1, 1, 1, 1});
    e(0, 0, 0, 0) = 1.0;
    return e;
}

// env (bra, w_outer, w_inner, ket) for <a| W^dagger W |a>
Tensor left_env2_step(const Tensor& env, const Tensor& a, const Tensor& w) {
    Tensor t = contract(env, a, {{3, 0}});                // (lb, wo, wi, s, rk)
    t = contract(t, w, {{2, 0}, {3, 2}});                 // (lb, wo, rk, s', wi')
    t = contract(t, w.conjugated(), {{1, 0}, {3, 1}});    // (lb, rk, wi', s'', wo')
    t = contract(t, a.conjugated(), {{0, 0}, {3, 1}});    // (rk, wi', wo', rb)
    return t.permuted({3, 2, 1, 0});
}

Tensor right_env2_step(const Tensor& env, const Tensor& a, const Tensor& w) {
    Tensor t = contract(a, env, {{2, 3}});                // (lk, s, rb, wo, wi)
    t = contract(t, w, {{1, 2}, {4, 3}});                 // (lk, rb, wo, wl, s')
    t = contract(t, w.conjugated(), {{2, 3}, {4, 1}});    // (lk, rb, wl, wol, s'')
    t = contract(t, a.conjugated(), {{1, 2}, {4, 1}});    // (lk, wl, wol, lb)
    return t.permuted({3, 2, 1, 0});
}

Tensor apply_h(const LocalEnvironment& env, const Tensor& a) {
    Tensor t = contract(env.lh, a, {{2, 0}});             // (lb, w, s, rk)
    t = contract(t, env.w, {{1, 0}, {2, 2}});             // (lb, rk, s', wr)
    return contract(t, env.rh, {{1, 2}, {3, 1}});         // (lb, s', rb)
}

Tensor apply_q(const LocalEnvironment& env, const Tensor& a) {
    Tensor t = contract(env.lq, a, {{3, 0}});
    t = contract(t, env.w, {{2, 0}, {3, 2}});
    t = contract(t, env.w.conjugated(), {{1, 0}, {3, 1}}); // (lb, rk, wi', s'', wo')
    return contract(t, env.rq, {{1, 3}, {2, 2}, {4, 1}});
}

cplx dot(const Tensor& a, const Tensor& b) { return a.values().dot(b.values()); }

struct Envs {
    std::vector<Tensor> lh, rh, lq, rq;
};

Envs build_envs(const Mps& s, const Mpo& w, int center) {
    const int N = s.length();
    Envs e;
    e.lh.resize(N + 1);
    e.lq.resize(N + 1);
    e.rh.resize(N + 1);
    e.rq.resize(N + 1);
    e.lh[0] = detail::trivial_env();
    e.lq[0] = trivial_env2();
    for (int n = 0; n < center; ++n) {
        e.lh[n + 1] = detail::left_env_step(e.lh[n], s.sites[n], w.sites[n], s.sites[n]);
        e.lq[n + 1] = left_env2_step(e.lq[n], s.sites[n], w.sites[n]);
    }
    e.rh[N] = detail::trivial_env();
    e.rq[N] = trivial_env2();
    for (int n = N - 1; n > center; --n) {
        e.rh[n] = detail::right_env_step(e.rh[n + 1], s.sites[n], w.sites[n], s.sites[n]);
        e.rq[n] = right_env2_step(e.rq[n + 1], s.sites[n], w.sites[n]);
    }
    return e;
}

LocalEnvironment local_at(const Envs& e, const Mpo& w, int n, double lambda, double E0) {
    return {e.lh[n], e.rh[n + 1], e.lq[n], e.rq[n + 1], w.sites[n], lambda, E0};
}

struct LocalSolve {
    LocalCost last;
    double step = 0.0;
};

/// Backtracking gradient descent on one site tensor; `a` stays unit norm.
LocalSolve descend(const LocalEnvironment& env, Tensor& a, int max_steps, double step0, double step_size) {
    a *= cplx(1.0 / a.norm());
    LocalCost cur = local_cost_and_gradient(env, a);
    const double t_ref = step_size / (2.0 * std::max(apply_q(env, a).norm(), 1e-300));
    double t = step0 > 0.0 ? std::min(step0, 1e3 * t_ref) : t_ref;
    for (int k = 0; k < max_steps; ++k) {
        const double g2 = cur.gradient.squared_norm();
        if (!(g2 > 1e-32) || cur.cost <= 0.0)
            break;
        bool accepted = false;
        while (t > 1e-12 * t_ref) {
            Tensor trial = a + cplx(-t) * cur.gradient;
            trial *= cplx(1.0 / trial.norm());
            LocalCost next = local_cost_and_gradient(env, trial);
            if (std::isfinite(next.cost) && next.cost <= cur.cost - 1e-4 * t * g2) {
                const double gain = cur.cost - next.cost;
                a = std::move(trial);
                cur = std::move(next);
                t = std::min(1.5 * t, 1e3 * t_ref);
                accepted = true;
                if (gain <= 1e-10 * cur.cost)
                    k = max_steps;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) {
            t = t_ref;
            break;
        }
    }
    return {std::move(cur), t};
}

void pad_bonds(Mps& s, Index D, std::mt19937_64& rng) {
    const int N = s.length();
    std::vector<Index> bonds(N + 1, 1);
    Index left = 1;
    for (int n = 1; n < N; ++n) {
        left = std::min(D, left * s.phys_dim(n - 1));
        bonds[n] = left;
    }
    Index right = 1;
    for (int n = N - 1; n > 0; --n) {
        right = std::min(D, right * s.phys_dim(n));
        bonds[n] = std::min(bonds[n], right);
    }
    std::normal_distribution<double> normal;
    for (int n = 0; n < N; ++n) {
        const Tensor& a = s.sites[n];
        const Index l = bonds[n], d = a.dim(1), r = bonds[n + 1];
        if (l == a.dim(0) && r == a.dim(2))
            continue;
        const double scale = 1e-4 * a.norm() / std::sqrt(static_cast<double>(a.size()));
        Tensor b({l, d, r});
        for (Index i = 0; i < l; ++i)
            for (Index j = 0; j < d; ++j)
                for (Index k = 0; k < r; ++k)
                    b(i, j, k) = i < a.dim(0) && k < a.dim(2) ? a(i, j, k)
                                                              : cplx(scale * normal(rng), scale * normal(rng));
        s.sites[n] = std::move(b);
    }
    s.center.reset();
}

void perturb(Mps& s, double rel, std::mt19937_64& rng) {
    std::normal_distribution<double> normal;
    for (auto& a : s.sites) {
        const double scale = rel * a.norm() / std::sqrt(static_cast<double>(a.size()));
        for (Index i = 0; i < a.size(); ++i)
            a.values()[i] += cplx(scale * normal(rng), scale * normal(rng));
    }
    s.center.reset();
}

} // namespace

LocalEnvironment local_environment(const Mps& s, const Model& m, int site, double lambda, double E0) {
    if (site < 0 || site >= s.length())
        throw std::out_of_range("local_environment: site out of range");
    if (m.mpo.length() != s.length())
        throw ShapeError("local_environment: length mismatch");
    const Envs e = build_envs(s.center == site ? s : canonicalize(s, site), m.mpo, site);
    return local_at(e, m.mpo, site, lambda, E0);
}

LocalCost local_cost_and_gradient(const LocalEnvironment& env, const Tensor& a) {
    const double n = a.squared_norm();
    if (!(n > 0.0))
        throw NormalizationError("local_cost_and_gradient: zero tensor");
    const Tensor ha = apply_h(env, a);
    const Tensor qa = apply_q(env, a);
    const double e = dot(a, ha).real() / n;
    const double q = dot(a, qa).real() / n;
    LocalCost out;
    out.energy = e;
    out.variance = q - e * e;
    const double pen = e - env.E0;
    out.cost = out.variance + env.lambda * pen * pen;
    // 2 dC/dA*
    const double ch = 2.0 * (2.0 * env.lambda * pen - 2.0 * e) / n;
    const double ca = 2.0 * (-q - (2.0 * env.lambda * pen - 2.0 * e) * e) / n;
    out.gradient = cplx(2.0 / n) * qa;
    out.gradient += cplx(ch) * ha;
    out.gradient += cplx(ca) * a;
    return out;
}

VarResult minimize_variance(const Mps& s0, const Model& m, const VarOpts& opts) {
    const int N = s0.length();
    if (N < 1 || m.mpo.length() != N)
        throw ShapeError("minimize_variance: length mismatch");
    if (opts.D < 1 || opts.max_sweeps < 1 || opts.inner_steps < 1 || !(opts.step_size > 0.0) || opts.restarts < 0 ||
        !(opts.tol > 0.0 && opts.tol < 1.0) || (opts.lambda && *opts.lambda < 0.0))
        throw std::invalid_argument("minimize_variance: invalid options");
    if (s0.max_bond() > opts.D)
        throw std::invalid_argument("minimize_variance: initial bond exceeds D");

    const auto t_start = std::chrono::steady_clock::now();
    std::mt19937_64 rng(opts.seed ^ 0x5eedULL);
    const Mpo& w = m.mpo;

    Mps s = s0;
    pad_bonds(s, opts.D, rng);
    s = canonicalize(std::move(s), 0);
    normalize(s);

    VarResult res;
    double lambda = 0.0;
    bool lambda_fixed = opts.lambda.has_value();
    if (lambda_fixed) {
        lambda = *opts.lambda;
    } else {
        const Envs e = build_envs(s, w, 0);
        const LocalCost c = local_cost_and_gradient(local_at(e, w, 0, 0.0, opts.E0), s.sites[0]);
        lambda = 10.0 * std::max(c.variance, 0.0) / (double(N) * N);
    }

    // one sweep: left to right then back; returns the cost of the final state
    std::vector<double> steps(N, 0.0);
    auto sweep = [&](Mps& st, LocalCost& last) {
        Envs e = build_envs(st, w, 0);
        for (int n = 0; n + 1 < N; ++n) {
            auto sol = descend(local_at(e, w, n, lambda, opts.E0), st.sites[n], opts.inner_steps, steps[n],
                               opts.step_size);
            steps[n] = sol.step;
            last = std::move(sol.last);
            st = canonicalize(std::move(st), n + 1);
            e.lh[n + 1] = detail::left_env_step(e.lh[n], st.sites[n], w.sites[n], st.sites[n]);
            e.lq[n + 1] = left_env2_step(e.lq[n], st.sites[n], w.sites[n]);
        }
        for (int n = N - 1; n >= 0; --n) {
            auto sol = descend(local_at(e, w, n, lambda, opts.E0), st.sites[n], opts.inner_steps, steps[n],
                               opts.step_size);
            steps[n] = sol.step;
            last = std::move(sol.last);
            if (n == 0)
                break;
            st = canonicalize(std::move(st), n - 1);
            e.rh[n] = detail::right_env_step(e.rh[n + 1], st.sites[n], w.sites[n], st.sites[n]);
            e.rq[n] = right_env2_step(e.rq[n + 1], st.sites[n], w.sites[n]);
        }
        st.log_norm = 0.0;
    };
    auto seconds = [&] {
        if (!opts.timing)
            return 0.0;
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    };

    Mps best = s;
    LocalCost best_cost;
    best_cost.cost = std::numeric_limits<double>::infinity();
    int restarts = 0;
    bool diverged = false;

    for (int sw = 1; sw <= opts.max_sweeps; ++sw) {
        Mps trial = s;
        LocalCost last;
        bool ok = true;
        try {
            sweep(trial, last);
            ok = std::isfinite(last.cost) && trial.sites[0].all_finite();
        } catch (const NormalizationError&) {
            ok = false;
        }
        if (ok && sw == 1 && !lambda_fixed) {
            lambda = 10.0 * std::max(last.variance, 0.0) / (double(N) * N);
            lambda_fixed = true;
            const double pen = last.energy - opts.E0;
            last.cost = last.variance + lambda * pen * pen;
        }
        if (ok && last.cost > best_cost.cost + 1e-10)
            ok = false;
        if (!ok) {
            if (restarts >= opts.restarts) {
                diverged = true;
                break;
            }
            ++restarts;
            s = best_cost.cost < std::numeric_limits<double>::infinity() ? best : s0;
            pad_bonds(s, opts.D, rng);
            perturb(s, 1e-2, rng);
            s = canonicalize(std::move(s), 0);
            normalize(s);
            std::fill(steps.begin(), steps.end(), 0.0);
            continue;
        }
        res.trace.push_back({sw, last.cost, last.variance, last.energy, seconds()});
        const double prev = best_cost.cost;
        s = trial;
        best = trial;
        best_cost = last;
        if (std::isfinite(prev) && prev - last.cost <= opts.tol * std::abs(prev))
            break;
        if (last.cost <= 0.0)
            break;
    }

    normalize(best);
    res.state = std::move(best);
    res.lambda = lambda;
    res.restarts_used = restarts;
    res.diverged = diverged;
    if (std::isfinite(best_cost.cost)) {
        const double delta = std::sqrt(std::max(best_cost.variance, 0.0));
        res.energy_constraint_met = std::abs(best_cost.energy - opts.E0) <= std::max(delta / 10.0, 1e-4 * N);
    }
    return res;
}

void write_cost_csv(const std::vector<CostRecord>& trace, std::ostream& os) {
    os << "sweep,cost,variance,energy,seconds\n";
    char buf[160];
    for (const auto& r : trace) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g\n", r.sweep, r.cost, r.variance, r.energy,
                      r.seconds);
        os << buf;
    }
}

} // namespace chebmps
