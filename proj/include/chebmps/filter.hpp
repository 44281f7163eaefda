#pragma once

#include "chebmps/fit.hpp"
#include "chebmps/hamiltonian.hpp"
#include "chebmps/mps.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace chebmps {

/// Jackson damping factor g_k^(M), 0 <= k <= M.
double jackson(int k, int M);

struct KernelCoefficients {
    int M = 0;
    std::vector<double> g;
    /// c[2n] = (-1)^n (2 - delta_n0) / pi * g[2n], odd entries zero
    std::vector<double> c;
};

KernelCoefficients delta_coefficients(int M);

/// sum_n c_n T_n(x)
double delta_series(const KernelCoefficients& kc, double x);

/// Width pi / M of the damped delta.
double envelope_sigma(int M);

/// delta for the Chebyshev filter, (1/sigma_p^2 + 2 alpha^2 M^2 / (pi N)^2)^(-1/2).
double predicted_delta_cheby(double N, double M, double sigma_p, double alpha = 1.0);
/// Large-N form pi N / (sqrt(2) alpha M).
double predicted_delta_cheby_limit(double N, double M, double alpha = 1.0);
/// delta for M cosine factors, (1/sigma_p^2 + 2 M / N^2)^(-1/2).
double predicted_delta_cos(double N, double M, double sigma_p);
/// Large-N form N / sqrt(2 M).
double predicted_delta_cos_limit(double N, double M);

inline constexpr int kBlockColumns = 10;

struct TraceRow {
    int step = 0;
    double energy = 0.0;
    double variance = 0.0;
    double s_half = 0.0;
    /// entropies of central blocks of length 1..10; NaN when not computed
    std::array<double, kBlockColumns> s_block{};
    Index max_bond = 1;
    double discarded = 0.0;
    int d_tr = 1;
    double seconds = 0.0;
};

struct FilterTrace {
    std::vector<TraceRow> rows;
    /// set when the variance grew more than tenfold between two records
    bool truncation_dominated = false;
};

void write_trace_csv(const FilterTrace& trace, std::ostream& os);
FilterTrace read_trace_csv(std::istream& is);

struct FilterOptions {
    Index d_max = 64;
    double weight_tol = 0.0;
    /// 0 selects ceil(M / 50)
    int record_every = 0;
    /// longest central block whose entropy is recorded
    int block_max = kBlockColumns;
    double d_tr_epsilon = 0.01;
    /// record wall time; off keeps traces reproducible bit for bit
    bool timing = false;
    std::uint64_t seed = 0;
    int min_half_sweeps = 2;
    int max_half_sweeps = 6;
    /// stop an order once its discarded weight exceeds this; 0 never stops
    double abandon_weight = 0.0;
};

struct FilterResult {
    int M = 0;
    Mps state;
    FilterTrace trace;
    /// squared norm removed by all truncations, relative to the running sum
    double discarded_weight = 0.0;
    /// plain sum of the relative weights discarded from the T_n
    double recurrence_discarded = 0.0;
    /// step at which the order was given up, 0 if it ran to M
    int abandoned_at = 0;
};

/// Chebyshev delta filter around r.E0 applied to p, one result per order.
/// All orders share a single recurrence; each keeps its own running sum.
std::vector<FilterResult> cheby_filter(const Mps& p, const Model& m, std::span<const int> orders, const Rescaling& r,
                                       const FilterOptions& opts);

FilterResult cheby_filter(const Mps& p, const Model& m, int M, const Rescaling& r, const FilterOptions& opts);

/// Diagnostics of one state as recorded in a trace row.
TraceRow measure(const Mps& s, const Model& m, int block_max = kBlockColumns, double d_tr_epsilon = 0.01);

} // namespace chebmps
