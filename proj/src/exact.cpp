#include "chebmps/exact.hpp"

#include "chebmps/filter.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace chebmps {

namespace {

void check_size(const Model& m, const CVector& v) {
    if (m.N > kMaxExactSites)
        throw std::invalid_argument("exact backend limited to " + std::to_string(kMaxExactSites) + " sites");
    if (v.size() != (Index{1} << m.N))
        throw ShapeError("state vector does not match model size");
}

/// out += scale * (H - shift) v
void accumulate_h(const Model& m, const CVector& v, CVector& out, double scale, double shift) {
    const int N = m.N;
    const Index dim = v.size();
    for (int n = 0; n + 1 < N; ++n) {
        const CMatrix h = scale * m.terms[n];
        const Index bl = Index{1} << n, br = Index{1} << (n + 1);
        for (Index i = 0; i < dim; ++i) {
            if (i & (bl | br))
                continue;
            // local index 2 * s_n + s_{n+1}
            const Index idx[4] = {i, i | br, i | bl, i | bl | br};
            const cplx x0 = v[idx[0]], x1 = v[idx[1]], x2 = v[idx[2]], x3 = v[idx[3]];
            for (int a = 0; a < 4; ++a)
                out[idx[a]] += h(a, 0) * x0 + h(a, 1) * x1 + h(a, 2) * x2 + h(a, 3) * x3;
        }
    }
    const CMatrix h = scale * m.terms[N - 1];
    const Index b = Index{1} << (N - 1);
    for (Index i = 0; i < dim; ++i) {
        if (i & b)
            continue;
        const cplx x0 = v[i], x1 = v[i | b];
        out[i] += h(0, 0) * x0 + h(0, 1) * x1;
        out[i | b] += h(1, 0) * x0 + h(1, 1) * x1;
    }
    out += (scale * (m.offset - shift)) * v;
}

/// scale * (H - shift) v
CVector apply_shifted(const Model& m, const CVector& v, double scale, double shift) {
    CVector out = CVector::Zero(v.size());
    accumulate_h(m, v, out, scale, shift);
    return out;
}

double spectral_bound(const Model& m) {
    double s = 0.0;
    for (const auto& h : m.terms)
        s += operator_norm(h);
    return std::max(s, 1e-300);
}

/// sum_k coef[k] T_k(X) v with X = (H - center) / half_width
CVector chebyshev_series(const Model& m, const CVector& v, std::span<const cplx> coef, double center,
                         double half_width) {
    CVector t0 = v;
    CVector out = coef[0] * t0;
    if (coef.size() == 1)
        return out;
    CVector t1 = apply_shifted(m, v, 1.0 / half_width, center);
    out += coef[1] * t1;
    for (std::size_t k = 2; k < coef.size(); ++k) {
        CVector t2 = -t0;
        accumulate_h(m, t1, t2, 2.0 / half_width, center);
        out += coef[k] * t2;
        t0.swap(t1);
        t1.swap(t2);
    }
    return out;
}

/// Bessel coefficients of exp(i a X): (2 - delta_k0) i^k J_k(a)
std::vector<cplx> exp_coefficients(double a, double phase, double tol) {
    std::vector<cplx> c;
    const double aa = std::abs(a);
    for (int k = 0;; ++k) {
        const double j = std::cyl_bessel_j(static_cast<double>(k), aa) * ((a < 0 && (k % 2)) ? -1.0 : 1.0);
        cplx ik = std::pow(cplx(0, 1), k);
        c.push_back((k == 0 ? 1.0 : 2.0) * ik * j * std::exp(cplx(0, phase)));
        if (k > aa && std::abs(j) < tol)
            break;
        if (k > 100000)
            throw std::runtime_error("propagator expansion did not converge");
    }
    return c;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

} // namespace

CVector product_vector(std::span<const CVector> local) {
    CVector v = CVector::Ones(1);
    for (const auto& s : local) {
        CVector next(v.size() * s.size());
        for (Index b = 0; b < s.size(); ++b)
            next.segment(b * v.size(), v.size()) = s[b] * v;
        v = std::move(next);
    }
    return v;
}

CVector matvec(const Model& m, const CVector& v) {
    check_size(m, v);
    return apply_shifted(m, v, 1.0, 0.0);
}

CMatrix dense_hamiltonian(const Model& m) {
    if (m.N > 12)
        throw std::invalid_argument("dense_hamiltonian: N must be at most 12");
    const Index dim = Index{1} << m.N;
    CMatrix h(dim, dim);
    CVector e = CVector::Zero(dim);
    for (Index j = 0; j < dim; ++j) {
        e[j] = 1.0;
        h.col(j) = apply_shifted(m, e, 1.0, 0.0);
        e[j] = 0.0;
    }
    return h;
}

double exact_energy(const CVector& v, const Model& m) {
    check_size(m, v);
    return v.dot(matvec(m, v)).real() / v.squaredNorm();
}

double exact_variance(const CVector& v, const Model& m) {
    check_size(m, v);
    const CVector hv = matvec(m, v);
    const double n2 = v.squaredNorm();
    const double e = v.dot(hv).real() / n2;
    return hv.squaredNorm() / n2 - e * e;
}

std::vector<CVector> exact_cheby_filter(const CVector& v, const Model& m, std::span<const int> orders,
                                        const Rescaling& r) {
    check_size(m, v);
    if (orders.empty())
        return {};
    const int M_max = *std::max_element(orders.begin(), orders.end());
    std::vector<KernelCoefficients> kc;
    std::vector<CVector> psi;
    for (int M : orders) {
        kc.push_back(delta_coefficients(M));
        psi.push_back(kc.back().c[0] * v);
    }
    const double a = r.alpha / m.N;
    CVector t0 = v;
    CVector t1 = apply_shifted(m, v, a, r.E0);
    for (int n = 1; n <= M_max; ++n) {
        if (n >= 2) {
            CVector t2 = -t0;
            accumulate_h(m, t1, t2, 2.0 * a, r.E0);
            t0.swap(t1);
            t1.swap(t2);
        }
        for (std::size_t i = 0; i < orders.size(); ++i)
            if (n <= orders[i] && kc[i].c[n] != 0.0)
                psi[i] += kc[i].c[n] * t1;
    }
    for (auto& p : psi)
        p.normalize();
    return psi;
}

CVector exact_cheby_filter(const CVector& v, const Model& m, int M, const Rescaling& r) {
    const int orders[1] = {M};
    return std::move(exact_cheby_filter(v, m, orders, r)[0]);
}

CVector expm_i(const Model& m, const CVector& v, double theta, double tol) {
    check_size(m, v);
    if (theta == 0.0)
        return v;
    const double s = spectral_bound(m);
    const auto coef = exp_coefficients(theta * s, theta * m.offset, tol);
    // the offset is already carried by the phase
    Model shifted = m;
    shifted.offset = 0.0;
    return chebyshev_series(shifted, v, coef, 0.0, s);
}

cplx exact_evolution_overlap(const CVector& p, const Model& m, int k) {
    const CVector u = expm_i(m, p, 2.0 * k / m.N);
    return p.dot(u) / p.squaredNorm();
}

CVector cosine_filter_exact(const CVector& v, const Model& m, int M, double E0) {
    check_size(m, v);
    const double s = spectral_bound(m);
    Model shifted = m;
    shifted.offset = 0.0;
    // cos(a X + b) with X = (H - offset)/s, a = s/N, b = (offset - E0)/N
    const double a = s / m.N;
    const double b = (m.offset - E0) / m.N;
    const auto e = exp_coefficients(a, b, 1e-14);
    std::vector<cplx> c;
    for (const auto& x : e)
        c.emplace_back(x.real());
    CVector out = v;
    for (int k = 0; k < M; ++k) {
        out = chebyshev_series(shifted, out, c, 0.0, s);
        out.normalize();
    }
    return out.normalized();
}

CVector cosine_filter_binomial(const CVector& v, const Model& m, int M, double E0, double x) {
    check_size(m, v);
    if (M == 0)
        return v.normalized();
    // cos^M(A) = 2^-M sum_j C(M, j) exp(i (M - 2 j) A), A = (H - E0)/N
    const double cut = x * std::sqrt(static_cast<double>(M));
    int j_lo = M, j_hi = 0;
    for (int j = 0; j <= M; ++j)
        if (std::abs(0.5 * M - j) <= cut) {
            j_lo = std::min(j_lo, j);
            j_hi = std::max(j_hi, j);
        }
    auto weight = [&](int j) {
        return std::exp(std::lgamma(M + 1.0) - std::lgamma(j + 1.0) - std::lgamma(M - j + 1.0) - M * std::log(2.0));
    };
    auto evolve = [&](const CVector& u, double t) {
        CVector w = expm_i(m, u, t);
        return CVector(w * std::exp(cplx(0, -t * E0)));
    };
    CVector u = evolve(v, static_cast<double>(M - 2 * j_lo) / m.N);
    CVector out = weight(j_lo) * u;
    for (int j = j_lo + 1; j <= j_hi; ++j) {
        u = evolve(u, -2.0 / m.N);
        out += weight(j) * u;
    }
    return out.normalized();
}

LocalDos local_dos_check(const CVector& p, const Model& m, int bins) {
    if (m.N > 12)
        throw std::invalid_argument("local_dos_check: N must be at most 12");
    check_size(m, p);
    if (bins < 1)
        throw std::invalid_argument("local_dos_check: bins must be positive");
    const CMatrix h = dense_hamiltonian(m);
    Eigen::VectorXd energies, w;
    const CVector pn = p.normalized();
    if (m.real) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h.real());
        energies = es.eigenvalues();
        const Eigen::MatrixXd& V = es.eigenvectors();
        w = ((V.transpose() * pn.real()).cwiseAbs2() + (V.transpose() * pn.imag()).cwiseAbs2());
    } else {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(h);
        energies = es.eigenvalues();
        w = (es.eigenvectors().adjoint() * pn).cwiseAbs2();
    }
    LocalDos out;
    out.total_weight = w.sum();
    out.mean = w.dot(energies);
    out.sigma = std::sqrt(std::max(0.0, w.dot((energies.array() - out.mean).square().matrix())));
    const double lo = energies.minCoeff(), hi = energies.maxCoeff();
    const double width = hi > lo ? (hi - lo) / bins : 1.0;
    for (int b = 0; b <= bins; ++b)
        out.bin_edges.push_back(lo + b * width);
    out.weights.assign(bins, 0.0);
    for (Index i = 0; i < energies.size(); ++i) {
        int b = static_cast<int>((energies[i] - lo) / width);
        out.weights[std::clamp(b, 0, bins - 1)] += w[i];
    }
    out.degenerate = out.sigma <= 1e-12 * std::max(1.0, std::abs(out.mean));
    double cdf = 0.0, ks = 0.0;
    for (Index i = 0; i < energies.size();) {
        Index j = i;
        double jump = 0.0;
        while (j < energies.size() && energies[j] - energies[i] <= 1e-10 * std::max(1.0, std::abs(energies[i]))) {
            jump += w[j];
            ++j;
        }
        const double g = out.degenerate ? (energies[i] >= out.mean ? 1.0 : 0.0)
                                        : normal_cdf((energies[i] - out.mean) / out.sigma);
        const double g_before = out.degenerate ? (energies[i] > out.mean ? 1.0 : 0.0) : g;
        ks = std::max({ks, std::abs(cdf - g_before), std::abs(cdf + jump - g)});
        cdf += jump;
        i = j;
    }
    out.ks_distance = ks;
    return out;
}

DensityMatrix rdm(const CVector& v, int N, int first, int L_c) {
    if (v.size() != (Index{1} << N))
        throw ShapeError("rdm: vector size mismatch");
    if (L_c < 1 || L_c > 10 || first < 0 || first + L_c > N)
        throw std::out_of_range("rdm: bad window");
    const Index dw = Index{1} << L_c, dr = Index{1} << (N - L_c);
    const Index low_mask = (Index{1} << first) - 1;
    CMatrix a(dw, dr);
    for (Index i = 0; i < v.size(); ++i) {
        Index s = 0;
        for (int k = 0; k < L_c; ++k)
            s = (s << 1) | ((i >> (first + k)) & 1);
        const Index rest = (i & low_mask) | ((i >> (first + L_c)) << first);
        a(s, rest) = v[i];
    }
    CMatrix rho = a * a.adjoint();
    rho /= rho.trace().real();
    rho = 0.5 * (rho + rho.adjoint()).eval();
    return {first, L_c, std::move(rho)};
}

} // namespace chebmps
