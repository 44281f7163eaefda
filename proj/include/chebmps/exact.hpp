#pragma once

// State-vector reference backend. Basis index = sum_n s_n 2^n, so site 0 is
// the least significant bit (same convention as to_vector).

#include "chebmps/hamiltonian.hpp"
#include "chebmps/mps.hpp"

#include <span>
#include <vector>

namespace chebmps {

inline constexpr int kMaxExactSites = 24;

/// Product vector from local 2-vectors.
CVector product_vector(std::span<const CVector> local);

/// H v applied term by term with bit-indexed updates.
CVector matvec(const Model& m, const CVector& v);

/// Dense H assembled from the local terms (N <= 12).
CMatrix dense_hamiltonian(const Model& m);

double exact_energy(const CVector& v, const Model& m);
double exact_variance(const CVector& v, const Model& m);

/// Normalized Jackson-damped delta filter of order M around r.E0.
CVector exact_cheby_filter(const CVector& v, const Model& m, int M, const Rescaling& r);
/// Same filter for several orders sharing one recurrence; output order
/// follows `orders`.
std::vector<CVector> exact_cheby_filter(const CVector& v, const Model& m, std::span<const int> orders,
                                        const Rescaling& r);

/// exp(i theta H) v by a Chebyshev-Bessel expansion, truncated once the
/// coefficients drop below tol.
CVector expm_i(const Model& m, const CVector& v, double theta, double tol = 1e-12);

/// <p| exp(i 2 k H / N) |p>
cplx exact_evolution_overlap(const CVector& p, const Model& m, int k);

/// [cos((H - E0)/N)]^M v, one Chebyshev expansion per factor, normalized.
CVector cosine_filter_exact(const CVector& v, const Model& m, int M, double E0);

/// The same operator from the binomial sum over exp(i 2 m (H - E0)/N),
/// keeping |m| <= x sqrt(M); normalized.
CVector cosine_filter_binomial(const CVector& v, const Model& m, int M, double E0, double x);

struct LocalDos {
    std::vector<double> bin_edges;
    std::vector<double> weights;
    double mean = 0.0;
    double sigma = 0.0;
    double total_weight = 0.0;
    /// Kolmogorov-Smirnov distance between the weighted spectral CDF and the
    /// Gaussian CDF with the same mean and width
    double ks_distance = 0.0;
    /// sigma == 0: the state is an eigenstate and the Gaussian degenerates
    bool degenerate = false;
};

LocalDos local_dos_check(const CVector& p, const Model& m, int bins);

/// Reduced density matrix of a state vector, first window site most
/// significant.
DensityMatrix rdm(const CVector& v, int N, int first, int L_c);

} // namespace chebmps
