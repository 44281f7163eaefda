#pragma once

#include "chebmps/hamiltonian.hpp"
#include "chebmps/mps.hpp"

#include <span>
#include <string>
#include <utility>
#include <vector>

namespace chebmps {

/// <H> of the normalized state.
double energy(const Mps& s, const Model& m);
/// <H^2> - <H>^2 by exact double-layer contraction.
double variance(const Mps& s, const Model& m);

/// (1/2) sum |eig(rho - I / 2^L)|
double trace_distance_inf_T(const DensityMatrix& rho);

/// Smallest D with 1 - sum_{i<D} lambda_i^2 <= epsilon.
int d_tr(const SchmidtSpectrum& spectrum, double epsilon = 0.01);

/// Normalized expectation of a product of local operators. Each entry is
/// (first site, operator on 2^k sites); windows must not overlap.
cplx string_expectation(const Mps& s, std::span<const std::pair<int, CMatrix>> ops);

/// <h_n> for every local term; sums to <H> - offset.
std::vector<double> energy_profile(const Mps& s, const Model& m);

/// C(n, m) = <h_n h_m> - <h_n><h_m> for all pairs.
RowMatrix<double> energy_covariance(const Mps& s, const Model& m);

struct Correlation {
    int x = 0;
    double value = 0.0;
};

/// Connected correlations between h_{n_c} and every h_{n_c + x}.
std::vector<Correlation> energy_correlations(const Mps& s, const Model& m, int n_c);

/// Bond in the middle of the chain, N/2 - 1.
int central_site(int N);
/// Start of the 0011 block closest to the chain center.
int pattern_reference_site(std::span<const int> bits);

struct ScalingFit {
    /// "power": y = A x^-eta, params {A, eta}
    /// "affine-exp": y = a D0^(1/x) + b, params {D0, a, b}
    std::string form;
    std::vector<double> params;
    std::vector<double> errors;
    double residual = 0.0;
    int n_points = 0;
    std::pair<double, double> window{0.0, 0.0};
};

struct Point {
    double x = 0.0;
    double y = 0.0;
};

class FitError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Least squares of log y against log x.
ScalingFit fit_power(std::span<const Point> points);

/// Points are (delta, y) with y = 2^S or D_tr. Minimizes over D0 with the
/// linear coefficients solved at each trial value.
ScalingFit fit_D0(std::span<const Point> points);

/// Sum of squared residuals of y = a D0^(1/delta) + b with (a, b) refitted.
double affine_exp_residual(std::span<const Point> points, double D0, double* a = nullptr, double* b = nullptr);

/// gamma sqrt(N) / ln D1 (D0^(1/delta) - 1)
double bound_rhs(double N, double delta, double D0, double D1, double gamma);
/// 2 (1 + g) D0^(1/delta) - (1 + 2 g), g = 1 / (D1^(2 / (gamma sqrt N)) - 1)
double bound_rhs_finite(double N, double delta, double D0, double D1, double gamma);
double bound_g(double N, double D1, double gamma);
/// log2(D0^(1/delta) - 1) + log2(N) / 2 + k2
double entropy_bound(double N, double delta, double D0, double k2);

} // namespace chebmps
