#pragma once

// Approximating sums of (operator x state) terms by a single MPS of bounded
// bond dimension. Small problems are summed exactly and compressed; larger
// ones use single-site variational fitting on a guess whose bonds are first
// padded with random orthonormal directions, so the fit can grow the bond.

#include "chebmps/mpo.hpp"
#include "chebmps/mps.hpp"

#include <cstdint>
#include <span>

namespace chebmps {

/// coefficient * op |state>, with op == nullptr meaning the identity.
struct FitTerm {
    cplx coefficient;
    const Mpo* op = nullptr;
    const Mps* state = nullptr;
};

struct FitOptions {
    Index d_max = 64;
    double weight_tol = 0.0;
    /// Pad guess bonds up to the reachable size before sweeping.
    bool expand = true;
    /// Padding beyond d_max; 0 selects max(8, d_max / 8).
    Index extra = 0;
    /// Finish with a half-sweep that truncates to d_max.
    bool truncate = true;
    int min_half_sweeps = 2;
    int max_half_sweeps = 6;
    /// Relative gain in overlap below which sweeping stops.
    double tol = 1e-9;
    std::uint64_t seed = 0;
    /// Sum exactly when the summed bond never exceeds max(this, d_max).
    Index exact_bond = 128;
};

struct FitResult {
    Mps state;
    double discarded_weight = 0.0;
    int half_sweeps = 0;
    bool exact = false;
};

/// Variational fit starting from `guess`. The result is canonical, its center
/// tensor has unit norm and the overall scale lives in log_norm.
FitResult fit_sum(std::span<const FitTerm> terms, Mps guess, const FitOptions& opts);

/// Exact summation followed by compression.
FitResult sum_exact(std::span<const FitTerm> terms, const FitOptions& opts);

/// Picks the exact route for small bonds, otherwise fit_sum from `guess`
/// (or from the first term's state when guess is null).
FitResult sum_terms(std::span<const FitTerm> terms, const Mps* guess, const FitOptions& opts);

/// Largest bond of the exactly summed state.
Index summed_bond(std::span<const FitTerm> terms);

} // namespace chebmps
