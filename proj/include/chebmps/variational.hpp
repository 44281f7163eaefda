#pragma once

// Direct minimization of the energy variance over MPS of fixed bond dimension,
// with a quadratic penalty holding the mean energy near a target.

#include "chebmps/hamiltonian.hpp"
#include "chebmps/mps.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

namespace chebmps {

struct VarOpts {
    Index D = 64;
    double E0 = 0.0;
    /// unset: 10 * (initial variance) / N^2, rescaled once after the first sweep
    std::optional<double> lambda;
    int max_sweeps = 10;
    int inner_steps = 200;
    double step_size = 1.0;
    int restarts = 3;
    double tol = 1e-8;
    std::uint64_t seed = 0;
    /// wall-clock seconds in the cost trace, zero otherwise
    bool timing = false;
};

/// Environments for a one-site update at `site` of canonicalize(s, site).
struct LocalEnvironment {
    Tensor lh, rh;  // (bra, w, ket)
    Tensor lq, rq;  // (bra, w_outer, w_inner, ket)
    Tensor w;
    double lambda = 0.0;
    double E0 = 0.0;
};

LocalEnvironment local_environment(const Mps& s, const Model& m, int site, double lambda, double E0);

struct LocalCost {
    double cost = 0.0;
    double variance = 0.0;
    double energy = 0.0;
    /// dC/dRe(A) + i dC/dIm(A)
    Tensor gradient;
};

/// C = <H^2>/n - (<H>/n)^2 + lambda (<H>/n - E0)^2 with n = |A|^2.
LocalCost local_cost_and_gradient(const LocalEnvironment& env, const Tensor& a);

struct CostRecord {
    int sweep = 0;
    double cost = 0.0;
    double variance = 0.0;
    double energy = 0.0;
    double seconds = 0.0;
};

struct VarResult {
    Mps state;
    std::vector<CostRecord> trace;
    double lambda = 0.0;
    int restarts_used = 0;
    /// ran out of restarts after the local optimizer diverged
    bool diverged = false;
    /// |<H> - E0| <= max(delta / 10, 1e-4 N)
    bool energy_constraint_met = true;
};

VarResult minimize_variance(const Mps& s0, const Model& m, const VarOpts& opts);

void write_cost_csv(const std::vector<CostRecord>& trace, std::ostream& os);

} // namespace chebmps
