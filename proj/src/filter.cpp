#include "chebmps/filter.hpp"

#include "chebmps/analysis.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace chebmps {

using std::numbers::pi;

double jackson(int k, int M) {
    if (k < 0 || k > M)
        throw std::out_of_range("jackson: need 0 <= k <= M");
    const double q = pi / (M + 1);
    return ((M - k + 1) * std::cos(q * k) + std::sin(q * k) / std::tan(q)) / (M + 1);
}

KernelCoefficients delta_coefficients(int M) {
    if (M < 0)
        throw std::invalid_argument("delta_coefficients: M must be nonnegative");
    KernelCoefficients kc;
    kc.M = M;
    kc.g.resize(M + 1);
    kc.c.assign(M + 1, 0.0);
    for (int k = 0; k <= M; ++k)
        kc.g[k] = jackson(k, M);
    for (int n = 0; 2 * n <= M; ++n) {
        const double sign = n % 2 == 0 ? 1.0 : -1.0;
        kc.c[2 * n] = sign * (n == 0 ? 1.0 : 2.0) / pi * kc.g[2 * n];
    }
    return kc;
}

double delta_series(const KernelCoefficients& kc, double x) {
    // Clenshaw
    double b1 = 0.0, b2 = 0.0;
    for (int n = kc.M; n >= 1; --n) {
        const double b0 = kc.c[n] + 2.0 * x * b1 - b2;
        b2 = b1;
        b1 = b0;
    }
    return kc.c[0] + x * b1 - b2;
}

double envelope_sigma(int M) {
    if (M < 1)
        throw std::invalid_argument("envelope_sigma: M must be positive");
    return pi / M;
}

double predicted_delta_cheby(double N, double M, double sigma_p, double alpha) {
    const double w = alpha * M / (pi * N);
    return 1.0 / std::sqrt(1.0 / (sigma_p * sigma_p) + 2.0 * w * w);
}

double predicted_delta_cheby_limit(double N, double M, double alpha) { return pi * N / (std::sqrt(2.0) * alpha * M); }

double predicted_delta_cos(double N, double M, double sigma_p) {
    return 1.0 / std::sqrt(1.0 / (sigma_p * sigma_p) + 2.0 * M / (N * N));
}

double predicted_delta_cos_limit(double N, double M) { return N / std::sqrt(2.0 * M); }

// ---- trace io

namespace {

const char* kHeader = "step,energy,variance,S_half,S_block_1,S_block_2,S_block_3,S_block_4,S_block_5,S_block_6,"
                      "S_block_7,S_block_8,S_block_9,S_block_10,max_bond,discarded,d_tr,seconds";

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

void write_trace_csv(const FilterTrace& trace, std::ostream& os) {
    os << kHeader << '\n';
    for (const auto& r : trace.rows) {
        os << r.step << ',' << num(r.energy) << ',' << num(r.variance) << ',' << num(r.s_half);
        for (double s : r.s_block)
            os << ',' << num(s);
        os << ',' << r.max_bond << ',' << num(r.discarded) << ',' << r.d_tr << ',' << num(r.seconds) << '\n';
    }
}

FilterTrace read_trace_csv(std::istream& is) {
    FilterTrace trace;
    std::string line;
    if (!std::getline(is, line) || line != kHeader)
        throw std::runtime_error("trace csv: unexpected header");
    double prev_var = -1.0;
    while (std::getline(is, line)) {
        if (line.empty())
            continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ','))
            f.push_back(cell);
        if (f.size() != 8 + kBlockColumns)
            throw std::runtime_error("trace csv: wrong column count");
        TraceRow r;
        std::size_t i = 0;
        r.step = std::stoi(f[i++]);
        r.energy = std::stod(f[i++]);
        r.variance = std::stod(f[i++]);
        r.s_half = std::stod(f[i++]);
        for (auto& s : r.s_block)
            s = std::stod(f[i++]);
        r.max_bond = std::stol(f[i++]);
        r.discarded = std::stod(f[i++]);
        r.d_tr = std::stoi(f[i++]);
        r.seconds = std::stod(f[i++]);
        if (prev_var > 0.0 && r.variance > 10.0 * prev_var)
            trace.truncation_dominated = true;
        prev_var = r.variance;
        trace.rows.push_back(r);
    }
    return trace;
}

TraceRow measure(const Mps& s, const Model& m, int block_max, double d_tr_epsilon) {
    TraceRow row;
    const int N = s.length();
    const double e = expectation(s, m.mpo).real();
    row.energy = e;
    row.variance = expectation2(s, m.mpo) - e * e;
    row.max_bond = s.max_bond();
    if (N >= 2) {
        const auto sp = schmidt(s, N / 2);
        row.s_half = entropy_bits(sp);
        row.d_tr = d_tr(sp, d_tr_epsilon);
    }
    row.s_block.fill(std::numeric_limits<double>::quiet_NaN());
    const int lmax = std::min({block_max, kBlockColumns, N});
    for (int L = 1; L <= lmax; ++L) {
        const auto rho = rdm(s, (N - L) / 2, L);
        Eigen::SelfAdjointEigenSolver<CMatrix> es(rho.rho, Eigen::EigenvaluesOnly);
        double S = 0.0;
        for (Index i = 0; i < es.eigenvalues().size(); ++i) {
            const double p = es.eigenvalues()(i);
            if (p > 1e-300)
                S -= p * std::log2(p);
        }
        row.s_block[L - 1] = std::max(S, 0.0);
    }
    return row;
}

// ---- filter

namespace {

std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t step_seed(std::uint64_t seed, int n, int slot) {
    return mix(mix(seed) ^ (static_cast<std::uint64_t>(n) << 8) ^ static_cast<std::uint64_t>(slot));
}

struct Running {
    int M;
    int every;
    KernelCoefficients kc;
    Mps psi;
    double discarded = 0.0;
    double recurrence_discarded = 0.0;
    FilterTrace trace;
    bool done = false;
    int abandoned_at = 0;
};

} // namespace

std::vector<FilterResult> cheby_filter(const Mps& p, const Model& m, std::span<const int> orders, const Rescaling& r,
                                       const FilterOptions& opts) {
    if (orders.empty())
        return {};
    if (std::abs(norm(p) - 1.0) > 1e-8)
        throw NormalizationError("cheby_filter: initial state must be normalized");
    const auto t_start = std::chrono::steady_clock::now();
    auto elapsed = [&] {
        if (!opts.timing)
            return 0.0;
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    };

    const Mpo ht = rescaled(m, r);
    FitOptions fo;
    fo.d_max = opts.d_max;
    fo.weight_tol = opts.weight_tol;
    fo.min_half_sweeps = opts.min_half_sweeps;
    fo.max_half_sweeps = opts.max_half_sweeps;

    std::vector<Running> runs;
    int M_max = 0;
    for (int M : orders) {
        if (M < 0)
            throw std::invalid_argument("cheby_filter: negative order");
        Running run{M, opts.record_every > 0 ? opts.record_every : std::max(1, (M + 49) / 50), delta_coefficients(M),
                    p, 0.0, 0.0, {}, false};
        run.psi.log_norm += std::log(run.kc.c[0]);
        M_max = std::max(M_max, M);
        runs.push_back(std::move(run));
    }

    auto record = [&](Running& run, int n) {
        TraceRow row = measure(run.psi, m, opts.block_max, opts.d_tr_epsilon);
        row.step = n;
        row.discarded = run.discarded;
        row.seconds = elapsed();
        if (!run.trace.rows.empty()) {
            const double prev = run.trace.rows.back().variance;
            if (prev > 0.0 && row.variance > 10.0 * prev)
                run.trace.truncation_dominated = true;
        }
        run.trace.rows.push_back(row);
    };

    for (auto& run : runs)
        record(run, 0);

    // T_0 = p, T_1 = H~ p
    Mps t_prev = p, t_cur;
    for (int n = 1; n <= M_max; ++n) {
        if (std::all_of(runs.begin(), runs.end(), [](const Running& r) { return r.done; }))
            break;
        FitResult next;
        if (n == 1) {
            const FitTerm term{1.0, &ht, &p};
            fo.seed = step_seed(opts.seed, n, 0);
            next = sum_terms(std::span(&term, 1), nullptr, fo);
        } else {
            const FitTerm terms[2] = {{2.0, &ht, &t_cur}, {-1.0, nullptr, &t_prev}};
            fo.seed = step_seed(opts.seed, n, 0);
            next = sum_terms(terms, &t_cur, fo);
            t_prev = std::move(t_cur);
        }
        t_cur = std::move(next.state);
        const double log_t = log_norm(t_cur);

        int slot = 1;
        for (auto& run : runs) {
            ++slot;
            if (run.done)
                continue;
            if (n <= run.M) {
                // weight removed from T_n, in units of the running sum
                const double rel = 2.0 * (log_t - log_norm(run.psi));
                run.discarded += next.discarded_weight * std::exp(std::min(rel, 700.0));
                run.recurrence_discarded += next.discarded_weight;
                const double c = run.kc.c[n];
                if (c != 0.0) {
                    const FitTerm terms[2] = {{1.0, nullptr, &run.psi}, {c, nullptr, &t_cur}};
                    fo.seed = step_seed(opts.seed, n, slot);
                    auto sum = sum_terms(terms, &run.psi, fo);
                    run.psi = std::move(sum.state);
                    run.discarded += sum.discarded_weight;
                }
            }
            const bool give_up = opts.abandon_weight > 0.0 && run.discarded > opts.abandon_weight && n < run.M;
            if (n == run.M || n % run.every == 0 || give_up)
                record(run, n);
            if (give_up)
                run.abandoned_at = n;
            if (n == run.M || give_up)
                run.done = true;
        }
    }

    std::vector<FilterResult> out;
    for (auto& run : runs) {
        FilterResult res;
        res.M = run.M;
        res.state = std::move(run.psi);
        normalize(res.state);
        res.trace = std::move(run.trace);
        res.discarded_weight = run.discarded;
        res.recurrence_discarded = run.recurrence_discarded;
        res.abandoned_at = run.abandoned_at;
        out.push_back(std::move(res));
    }
    return out;
}

FilterResult cheby_filter(const Mps& p, const Model& m, int M, const Rescaling& r, const FilterOptions& opts) {
    const int orders[1] = {M};
    auto out = cheby_filter(p, m, std::span<const int>(orders), r, opts);
    return std::move(out.front());
}

} // namespace chebmps
