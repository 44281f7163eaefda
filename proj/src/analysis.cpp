#include "chebmps/analysis.hpp"

#include <Eigen/Eigenvalues>
#include <boost/math/tools/minima.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace chebmps {

namespace {

// Ket block over `k` sites starting at `first`, as (left, 2^k * right) with
// the first site most significant.
CMatrix merged_block(const Mps& s, int first, int k) {
    const Tensor& a = s.sites[first];
    CMatrix m = Eigen::Map<const CMatrix>(a.data(), a.dim(0) * a.dim(1), a.dim(2));
    for (int j = 1; j < k; ++j) {
        const Tensor& b = s.sites[first + j];
        Eigen::Map<const CMatrix> bm(b.data(), b.dim(0), b.dim(1) * b.dim(2));
        CMatrix next = m * bm;
        m = Eigen::Map<CMatrix>(next.data(), next.size() / b.dim(2), b.dim(2));
    }
    return m;
}

int op_sites(const CMatrix& op) {
    int k = 0;
    Index d = op.rows();
    while (d > 1) {
        d /= 2;
        ++k;
    }
    if (op.rows() != op.cols() || (Index{1} << k) != op.rows())
        throw ShapeError("operator must be square with dimension 2^k");
    return k;
}

// env(bra bond, ket bond) carried across an operator block of k sites; the
// identity case is op of size 0.
CMatrix carry_left(const CMatrix& env, const Mps& s, int first, int k, const CMatrix* op) {
    const CMatrix ket = merged_block(s, first, k);
    const Index dl = env.rows();
    const Index dr = s.sites[first + k - 1].dim(2);
    const Index p = ket.rows() / s.sites[first].dim(0);
    // y(lb, p, r)
    CMatrix y = env * Eigen::Map<const CMatrix>(ket.data(), ket.rows() / p, p * dr);
    if (op) {
        CMatrix z(dl, p * dr);
        for (Index l = 0; l < dl; ++l) {
            Eigen::Map<CMatrix> yl(y.row(l).data(), p, dr);
            CMatrix t = (*op) * yl;
            Eigen::Map<CMatrix>(z.row(l).data(), p, dr) = t;
        }
        y = std::move(z);
    }
    Eigen::Map<const CMatrix> ym(y.data(), dl * p, dr);
    return ket.adjoint() * ym;
}

// Right environments R[n] for sites n..N-1 (R[N] = 1).
std::vector<CMatrix> right_envs(const Mps& s) {
    const int N = s.length();
    std::vector<CMatrix> r(N + 1);
    r[N] = CMatrix::Identity(1, 1);
    for (int n = N - 1; n >= 0; --n) {
        const Tensor& a = s.sites[n];
        const Index dl = a.dim(0), d = a.dim(1), dr = a.dim(2);
        Eigen::Map<const CMatrix> am(a.data(), dl * d, dr);
        CMatrix t = am * r[n + 1].transpose();
        Eigen::Map<const CMatrix> al(a.data(), dl, d * dr);
        Eigen::Map<const CMatrix> tl(t.data(), dl, d * dr);
        r[n] = al.conjugate() * tl.transpose();
    }
    return r;
}

// Both environments are indexed (bra, ket).
cplx close(const CMatrix& left, const CMatrix& right) { return (left.array() * right.array()).sum(); }

} // namespace

double energy(const Mps& s, const Model& m) { return expectation(s, m.mpo).real(); }

double variance(const Mps& s, const Model& m) {
    const double e = expectation(s, m.mpo).real();
    return expectation2(s, m.mpo) - e * e;
}

double trace_distance_inf_T(const DensityMatrix& rho) {
    const CMatrix& r = rho.rho;
    if ((r - r.adjoint()).norm() > 1e-10 * std::max(1.0, r.norm()))
        throw std::invalid_argument("density matrix is not Hermitian");
    const Index dim = r.rows();
    CMatrix diff = 0.5 * (r + r.adjoint());
    diff.diagonal().array() -= 1.0 / static_cast<double>(dim);
    Eigen::SelfAdjointEigenSolver<CMatrix> es(diff, Eigen::EigenvaluesOnly);
    return 0.5 * es.eigenvalues().cwiseAbs().sum();
}

int d_tr(const SchmidtSpectrum& spectrum, double epsilon) {
    const auto sp = spectrum.normalized();
    double kept = 0.0;
    for (std::size_t i = 0; i < sp.values.size(); ++i) {
        kept += sp.values[i] * sp.values[i];
        if (1.0 - kept <= epsilon)
            return static_cast<int>(i + 1);
    }
    return std::max<int>(1, static_cast<int>(sp.values.size()));
}

cplx string_expectation(const Mps& s, std::span<const std::pair<int, CMatrix>> ops) {
    const int N = s.length();
    CMatrix env = CMatrix::Identity(1, 1);
    CMatrix plain = env;
    int site = 0;
    for (const auto& [first, op] : ops) {
        const int k = op_sites(op);
        if (first < site || first + k > N)
            throw std::out_of_range("operator windows overlap or leave the chain");
        for (; site < first; ++site) {
            env = carry_left(env, s, site, 1, nullptr);
            plain = carry_left(plain, s, site, 1, nullptr);
        }
        env = carry_left(env, s, site, k, &op);
        plain = carry_left(plain, s, site, k, nullptr);
        site += k;
    }
    for (; site < N; ++site) {
        env = carry_left(env, s, site, 1, nullptr);
        plain = carry_left(plain, s, site, 1, nullptr);
    }
    return env(0, 0) / plain(0, 0);
}

std::vector<double> energy_profile(const Mps& s, const Model& m) {
    const int N = s.length();
    const auto r = right_envs(s);
    const double nrm = close(CMatrix::Identity(1, 1), r[0]).real();
    std::vector<double> out;
    CMatrix left = CMatrix::Identity(1, 1);
    for (int n = 0; n < N; ++n) {
        const CMatrix& h = m.terms[n];
        const int k = op_sites(h);
        out.push_back(close(carry_left(left, s, n, k, &h), r[n + k]).real() / nrm);
        left = carry_left(left, s, n, 1, nullptr);
    }
    return out;
}

RowMatrix<double> energy_covariance(const Mps& s, const Model& m) {
    const int N = s.length();
    const auto r = right_envs(s);
    const double nrm = close(CMatrix::Identity(1, 1), r[0]).real();
    const auto mean = energy_profile(s, m);
    RowMatrix<double> c = RowMatrix<double>::Zero(N, N);

    std::vector<int> width(N);
    for (int n = 0; n < N; ++n)
        width[n] = op_sites(m.terms[n]);

    CMatrix left = CMatrix::Identity(1, 1);
    for (int a = 0; a < N; ++a) {
        const int ka = width[a];
        // overlapping pairs: a single product operator on the union window
        for (int b = a; b < N && b < a + ka; ++b) {
            const int kb = width[b];
            const int span = std::max(a + ka, b + kb) - a;
            if (a + span > N)
                continue;
            auto embed = [&](const CMatrix& h, int off, int k) {
                const CMatrix pre = CMatrix::Identity(Index{1} << off, Index{1} << off);
                const CMatrix post = CMatrix::Identity(Index{1} << (span - off - k), Index{1} << (span - off - k));
                return CMatrix(kron(kron(pre, h), post));
            };
            CMatrix prod = embed(m.terms[a], 0, ka) * embed(m.terms[b], b - a, kb);
            const double v = close(carry_left(left, s, a, span, &prod), r[a + span]).real() / nrm;
            c(a, b) = v - mean[a] * mean[b];
            c(b, a) = c(a, b);
        }
        // separated pairs: carry the first operator then scan to the right
        CMatrix env = carry_left(left, s, a, ka, &m.terms[a]);
        int site = a + ka;
        for (int b = a + ka; b < N; ++b) {
            for (; site < b; ++site)
                env = carry_left(env, s, site, 1, nullptr);
            const int kb = width[b];
            if (b + kb > N)
                continue;
            const double v = close(carry_left(env, s, b, kb, &m.terms[b]), r[b + kb]).real() / nrm;
            c(a, b) = v - mean[a] * mean[b];
            c(b, a) = c(a, b);
        }
        left = carry_left(left, s, a, 1, nullptr);
    }
    return c;
}

std::vector<Correlation> energy_correlations(const Mps& s, const Model& m, int n_c) {
    const int N = s.length();
    if (n_c < 0 || n_c >= N)
        throw std::out_of_range("reference site outside the chain");
    const auto c = energy_covariance(s, m);
    std::vector<Correlation> out;
    for (int n = 0; n < N; ++n)
        out.push_back({n - n_c, c(n_c, n)});
    return out;
}

int central_site(int N) { return std::max(0, N / 2 - 1); }

int pattern_reference_site(std::span<const int> bits) {
    const int N = static_cast<int>(bits.size());
    const double mid = 0.5 * (N - 1);
    int best = -1;
    double dist = 0.0;
    for (int p = 0; p + 3 < N; ++p) {
        if (bits[p] != 0 || bits[p + 1] != 0 || bits[p + 2] != 1 || bits[p + 3] != 1)
            continue;
        const double d = std::abs(p + 1.5 - mid);
        if (best < 0 || d < dist) {
            best = p;
            dist = d;
        }
    }
    return best < 0 ? central_site(N) : best;
}

ScalingFit fit_power(std::span<const Point> points) {
    if (points.size() < 3)
        throw FitError("power-law fit needs at least 3 points");
    const Index n = static_cast<Index>(points.size());
    Eigen::MatrixXd a(n, 2);
    Eigen::VectorXd y(n);
    for (Index i = 0; i < n; ++i) {
        const auto& p = points[i];
        if (!(p.x > 0.0) || !(p.y > 0.0))
            throw FitError("power-law fit needs positive data");
        a(i, 0) = 1.0;
        a(i, 1) = -std::log(p.x);
        y(i) = std::log(p.y);
    }
    const Eigen::Vector2d beta = a.colPivHouseholderQr().solve(y);
    const Eigen::VectorXd res = y - a * beta;
    const double rss = res.squaredNorm();
    Eigen::Vector2d err = Eigen::Vector2d::Zero();
    if (n > 2) {
        const Eigen::Matrix2d cov = (a.transpose() * a).inverse() * (rss / static_cast<double>(n - 2));
        err = cov.diagonal().cwiseSqrt();
    }
    ScalingFit f;
    f.form = "power";
    const double A = std::exp(beta(0));
    f.params = {A, beta(1)};
    f.errors = {A * err(0), err(1)};
    f.residual = std::sqrt(rss);
    f.n_points = static_cast<int>(n);
    auto [lo, hi] = std::minmax_element(points.begin(), points.end(),
                                        [](const Point& l, const Point& r) { return l.x < r.x; });
    f.window = {lo->x, hi->x};
    return f;
}

double affine_exp_residual(std::span<const Point> points, double D0, double* a, double* b) {
    const Index n = static_cast<Index>(points.size());
    Eigen::MatrixXd m(n, 2);
    Eigen::VectorXd y(n);
    for (Index i = 0; i < n; ++i) {
        m(i, 0) = std::pow(D0, 1.0 / points[i].x);
        m(i, 1) = 1.0;
        y(i) = points[i].y;
    }
    const Eigen::Vector2d c = m.colPivHouseholderQr().solve(y);
    if (a)
        *a = c(0);
    if (b)
        *b = c(1);
    return (y - m * c).squaredNorm();
}

ScalingFit fit_D0(std::span<const Point> points) {
    if (points.size() < 4)
        throw FitError("D0 fit needs at least 4 points");
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (const auto& p : points) {
        if (!(p.x > 0.0))
            throw FitError("D0 fit needs positive delta");
        lo = std::min(lo, 1.0 / p.x);
        hi = std::max(hi, 1.0 / p.x);
    }
    if (hi < 2.0 * lo)
        throw FitError("D0 fit needs a factor 2 span in 1/delta");

    // Search in log D0; the exponent D0^(1/delta) must stay representable.
    const double t_max = std::min(std::log(1e6), 600.0 / hi);
    const double t_min = 1e-6;
    auto objective = [&](double t) { return affine_exp_residual(points, std::exp(t), nullptr, nullptr); };
    // coarse scan, then Brent on the bracketing cell
    const int grid = 400;
    int best = 0;
    double fbest = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= grid; ++i) {
        const double t = t_min + (t_max - t_min) * i / grid;
        const double v = objective(t);
        if (v < fbest) {
            fbest = v;
            best = i;
        }
    }
    const double step = (t_max - t_min) / grid;
    const double left = std::max(t_min, t_min + (best - 1) * step);
    const double right = std::min(t_max, t_min + (best + 1) * step);
    const auto r = boost::math::tools::brent_find_minima(objective, left, right, 52);
    const double t = r.first;
    const double D0 = std::exp(t);
    double a = 0.0, b = 0.0;
    const double rss = affine_exp_residual(points, D0, &a, &b);

    const int n = static_cast<int>(points.size());
    // error from the curvature of the profiled residual
    const double h = 1e-4 * std::max(1.0, D0);
    const double f0 = rss;
    const double fp = affine_exp_residual(points, D0 + h);
    const double fm = affine_exp_residual(points, std::max(1.0 + 1e-12, D0 - h));
    const double curv = (fp - 2.0 * f0 + fm) / (h * h);
    const double s2 = n > 3 ? rss / (n - 3) : 0.0;
    const double err = curv > 0.0 ? std::sqrt(2.0 * s2 / curv) : std::numeric_limits<double>::infinity();

    ScalingFit f;
    f.form = "affine-exp";
    f.params = {D0, a, b};
    f.errors = {err, std::nan(""), std::nan("")};
    f.residual = std::sqrt(rss);
    f.n_points = n;
    f.window = {1.0 / hi, 1.0 / lo};
    return f;
}

double bound_rhs(double N, double delta, double D0, double D1, double gamma) {
    return gamma * std::sqrt(N) / std::log(D1) * (std::pow(D0, 1.0 / delta) - 1.0);
}

double bound_g(double N, double D1, double gamma) {
    return 1.0 / std::expm1(2.0 * std::log(D1) / (gamma * std::sqrt(N)));
}

double bound_rhs_finite(double N, double delta, double D0, double D1, double gamma) {
    const double g = bound_g(N, D1, gamma);
    return 2.0 * (1.0 + g) * std::pow(D0, 1.0 / delta) - (1.0 + 2.0 * g);
}

double entropy_bound(double N, double delta, double D0, double k2) {
    return std::log2(std::pow(D0, 1.0 / delta) - 1.0) + 0.5 * std::log2(N) + k2;
}

} // namespace chebmps
