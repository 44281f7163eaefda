#include "chebmps/hamiltonian.hpp"

#include "chebmps/mps.hpp"

#include <cmath>
#include <random>

namespace chebmps {

namespace {

/// c(a, b) = tr((s_a x s_b) h) / 4
Eigen::Matrix4cd pauli_coefficients(const CMatrix& h) {
    const auto& p = pauli::basis();
    Eigen::Matrix4cd c;
    for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b)
            c(a, b) = (kron(p[a], p[b]) * h).trace() / 4.0;
    return c;
}

CMatrix combine(const Eigen::Ref<const Eigen::VectorXcd>& coef) {
    const auto& p = pauli::basis();
    CMatrix m = CMatrix::Zero(2, 2);
    for (int a = 0; a < 3; ++a)
        m += coef[a] * p[a + 1];
    return m;
}

/// Lowest eigenpair of a Hermitian operator given as a matvec.
template <typename Apply>
std::pair<double, CVector> lanczos_lowest(Apply&& apply, CVector v, int max_iter = 40, double tol = 1e-12) {
    const Index dim = v.size();
    const int m = static_cast<int>(std::min<Index>(max_iter, dim));
    v.normalize();
    CMatrix basis(dim, m);
    std::vector<double> alpha, beta;
    double theta = 0.0;
    Eigen::VectorXd y;
    int k = 0;
    for (; k < m; ++k) {
        basis.col(k) = v;
        CVector w = apply(v);
        const double a = v.dot(w).real();
        alpha.push_back(a);
        w -= basis.leftCols(k + 1) * (basis.leftCols(k + 1).adjoint() * w);
        w -= basis.leftCols(k + 1) * (basis.leftCols(k + 1).adjoint() * w);
        const double b = w.norm();
        Eigen::VectorXd diag = Eigen::Map<Eigen::VectorXd>(alpha.data(), k + 1);
        Eigen::VectorXd sub = Eigen::VectorXd::Map(beta.data(), k);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> tri;
        tri.computeFromTridiagonal(diag, sub);
        theta = tri.eigenvalues()[0];
        y = tri.eigenvectors().col(0);
        if (b * std::abs(y[k]) < tol * std::max(1.0, std::abs(theta)) || b < 1e-14 || k + 1 == m) {
            ++k;
            break;
        }
        beta.push_back(b);
        v = w / b;
    }
    CVector out = basis.leftCols(k) * y.head(k).cast<cplx>();
    out.normalize();
    return {theta, out};
}

/// L (l', w, l) theta (l, s1, s2, r) W1 W2 R (r', w2, r)
Tensor apply_heff(const Tensor& L, const Tensor& w1, const Tensor& w2, const Tensor& R, const Tensor& th) {
    Tensor t = contract(L, th, {{2, 0}});         // (l', w, s1, s2, r)
    t = contract(t, w1, {{1, 0}, {2, 2}});         // (l', s2, r, s1', w1)
    t = contract(t, w2, {{4, 0}, {1, 2}});         // (l', r, s1', s2', w2)
    t = contract(t, R, {{1, 2}, {4, 1}});          // (l', s1', s2', r')
    return t;
}

} // namespace

TracelessTerms tracelessize(std::span<const CMatrix> raw) {
    TracelessTerms out;
    const auto& p = pauli::basis();
    CMatrix carry = CMatrix::Zero(2, 2);
    for (const auto& r : raw) {
        if (r.rows() != 4 || r.cols() != 4)
            throw ShapeError("tracelessize: raw terms must be 4x4");
        CMatrix h = r + kron(carry, p[0]);
        const Eigen::Matrix4cd c = pauli_coefficients(h);
        out.offset += c(0, 0).real();
        const CMatrix right = combine(c.row(0).tail(3).transpose());
        h -= c(0, 0) * CMatrix::Identity(4, 4);
        h -= kron(p[0], right);
        out.terms.push_back(h);
        carry = right;
    }
    out.terms.push_back(carry);
    return out;
}

Mpo mpo_from_terms(std::span<const CMatrix> terms, double scale, double constant) {
    const int N = static_cast<int>(terms.size());
    if (N < 2)
        throw std::invalid_argument("mpo_from_terms: need at least two sites");
    const auto& p = pauli::basis();
    std::vector<CMatrix> single(N, CMatrix::Zero(2, 2));
    std::vector<std::vector<CMatrix>> lhs(N), rhs(N);
    double c0 = constant;
    for (int n = 0; n + 1 < N; ++n) {
        const Eigen::Matrix4cd c = scale * pauli_coefficients(terms[n]);
        c0 += c(0, 0).real();
        single[n] += combine(c.col(0).tail(3));
        single[n + 1] += combine(c.row(0).tail(3).transpose());
        const Eigen::Matrix3cd two = c.bottomRightCorner(3, 3);
        Eigen::JacobiSVD<Eigen::Matrix3cd> svd(two, Eigen::ComputeFullU | Eigen::ComputeFullV);
        const auto& s = svd.singularValues();
        for (int k = 0; k < 3; ++k) {
            if (s[k] <= 1e-14 * std::max(1.0, s[0]))
                break;
            lhs[n].push_back(combine(svd.matrixU().col(k)));
            rhs[n].push_back(combine(s[k] * svd.matrixV().col(k).conjugate()));
        }
    }
    const CMatrix& last = terms[N - 1];
    if (last.rows() == 2)
        single[N - 1] += scale * last;
    else
        throw ShapeError("mpo_from_terms: last term must be single-site");
    single[0] += c0 * p[0];

    Mpo w;
    for (int n = 0; n < N; ++n) {
        const Index kl = n > 0 ? static_cast<Index>(rhs[n - 1].size()) : 0;
        const Index kr = static_cast<Index>(lhs[n].size());
        const Index dl = n == 0 ? 1 : 2 + kl;
        const Index dr = n == N - 1 ? 1 : 2 + kr;
        const Index start_r = 0, done_r = n == N - 1 ? 0 : 1 + kr;
        const Index done_l = n == 0 ? -1 : 1 + kl;
        Tensor t({dl, 2, 2, dr});
        auto put = [&](Index a, Index b, const CMatrix& op) {
            for (Index i = 0; i < 2; ++i)
                for (Index j = 0; j < 2; ++j)
                    t(a, i, j, b) += op(i, j);
        };
        if (n < N - 1) {
            put(0, start_r, p[0]);
            for (Index k = 0; k < kr; ++k)
                put(0, 1 + k, lhs[n][k]);
        }
        for (Index k = 0; k < kl; ++k)
            put(1 + k, done_r, rhs[n - 1][k]);
        put(0, done_r, single[n]);
        if (n > 0)
            put(done_l, done_r, p[0]);
        w.sites.push_back(std::move(t));
    }
    return w;
}

double operator_norm(const CMatrix& h) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(h, Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

Model make_model(std::string name, std::map<std::string, double> params, std::span<const CMatrix> raw) {
    if (raw.empty())
        throw std::invalid_argument("model needs at least two sites");
    Model m;
    m.name = std::move(name);
    m.params = std::move(params);
    m.N = static_cast<int>(raw.size()) + 1;
    auto tt = tracelessize(raw);
    m.terms = std::move(tt.terms);
    m.offset = tt.offset;
    m.mpo = mpo_from_terms(m.terms, 1.0, m.offset);
    m.h_min = std::numeric_limits<double>::infinity();
    for (const auto& h : m.terms) {
        const double nh = operator_norm(h);
        m.h_norm_max = std::max(m.h_norm_max, nh);
        if (nh > 1e-12)
            m.h_min = std::min(m.h_min, nh);
        m.real = m.real && h.imag().cwiseAbs().maxCoeff() == 0.0;
    }
    if (!std::isfinite(m.h_min))
        m.h_min = 0.0;
    return m;
}

Model build_ising(int N, double J, double g, double h) {
    if (N < 2)
        throw std::invalid_argument("build_ising: N must be at least 2");
    const CMatrix I = pauli::identity(), X = pauli::x(), Z = pauli::z();
    const CMatrix field = g * X + h * Z;
    std::vector<CMatrix> raw;
    for (int n = 0; n + 1 < N; ++n) {
        CMatrix t = J * kron(Z, Z) + kron(field, I);
        if (n + 2 == N)
            t += kron(I, field);
        raw.push_back(t);
    }
    return make_model("ising", {{"J", J}, {"g", g}, {"h", h}}, raw);
}

Model build_xyz(int N, double Jx, double Jy, double Jz, double h) {
    if (N < 2)
        throw std::invalid_argument("build_xyz: N must be at least 2");
    const CMatrix I = pauli::identity(), X = pauli::x(), Y = pauli::y(), Z = pauli::z();
    std::vector<CMatrix> raw;
    for (int n = 0; n + 1 < N; ++n) {
        CMatrix t = Jx * kron(X, X) + Jy * kron(Y, Y) + Jz * kron(Z, Z) + h * kron(Z, I);
        if (n + 2 == N)
            t += h * kron(I, Z);
        raw.push_back(t);
    }
    auto m = make_model("xyz", {{"Jx", Jx}, {"Jy", Jy}, {"Jz", Jz}, {"h", h}}, raw);
    return m;
}

Model build_staggered_heisenberg(int N, double J) {
    if (N < 2)
        throw std::invalid_argument("build_staggered_heisenberg: N must be at least 2");
    const CMatrix X = pauli::x(), Y = pauli::y(), Z = pauli::z();
    const CMatrix dot = kron(X, X) + kron(Y, Y) + kron(Z, Z);
    std::vector<CMatrix> raw;
    for (int n = 0; n + 1 < N; ++n)
        raw.push_back((n % 2 == 0 ? -J : J) * dot);
    return make_model("staggered", {{"J", J}}, raw);
}

double dmrg_ground_energy(const Mpo& w, Index D, int max_sweeps, double tol, bool* converged, unsigned seed) {
    const int N = w.length();
    std::mt19937_64 rng(seed);
    Mps s = canonicalize(random_mps(N, 2, std::min<Index>(D, 4), rng), 0);
    normalize(s);
    std::vector<Tensor> L(N + 1), R(N + 1);
    L[0] = detail::trivial_env();
    R[N] = detail::trivial_env();
    for (int n = N - 1; n >= 1; --n)
        R[n] = detail::right_env_step(R[n + 1], s.sites[n], w.sites[n], s.sites[n]);

    TruncationPolicy policy{D, 0.0};
    double energy = 0.0, previous = std::numeric_limits<double>::infinity();
    bool ok = false;
    auto optimize = [&](int n, bool moving_right) {
        Tensor th = contract(s.sites[n], s.sites[n + 1], {{2, 0}});
        const auto shape = th.shape();
        auto apply = [&](const CVector& v) {
            Tensor x(shape, v);
            return CVector(apply_heff(L[n], w.sites[n], w.sites[n + 1], R[n + 2], x).values());
        };
        auto [e, vec] = lanczos_lowest(apply, th.values());
        energy = e;
        th = Tensor(shape, vec);
        auto f = factorize<cplx>(th.matrix(2), moving_right ? Isometry::left : Isometry::right, policy);
        if (moving_right) {
            const Index k = f.isometry.cols();
            s.sites[n] = from_matrix(f.isometry, {shape[0], shape[1], k});
            s.sites[n + 1] = from_matrix(f.carry, {k, shape[2], shape[3]});
            L[n + 1] = detail::left_env_step(L[n], s.sites[n], w.sites[n], s.sites[n]);
        } else {
            const Index k = f.isometry.rows();
            s.sites[n + 1] = from_matrix(f.isometry, {k, shape[2], shape[3]});
            s.sites[n] = from_matrix(f.carry, {shape[0], shape[1], k});
            R[n + 1] = detail::right_env_step(R[n + 2], s.sites[n + 1], w.sites[n + 1], s.sites[n + 1]);
        }
    };
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        for (int n = 0; n + 1 < N; ++n)
            optimize(n, n + 2 < N);
        for (int n = N - 2; n >= 0; --n)
            optimize(n, false);
        if (std::abs(energy - previous) < tol * std::max(1.0, std::abs(energy))) {
            ok = true;
            break;
        }
        previous = energy;
    }
    if (converged)
        *converged = ok;
    return energy;
}

Edges spectrum_edges(const Model& m, Index d_dmrg, int max_sweeps, double tol) {
    Edges e;
    bool c1 = false, c2 = false;
    e.E_min = dmrg_ground_energy(m.mpo, d_dmrg, max_sweeps, tol, &c1);
    Mpo neg = m.mpo;
    neg.sites[0] *= cplx(-1.0);
    e.E_max = -dmrg_ground_energy(neg, d_dmrg, max_sweeps, tol, &c2);
    e.converged = c1 && c2;
    return e;
}

Rescaling make_rescaling(const Model& m, const Edges& edges, double E0, std::optional<double> alpha) {
    Rescaling r;
    r.E0 = E0;
    r.E_min = edges.E_min;
    r.E_max = edges.E_max;
    r.in_range = E0 >= edges.E_min && E0 <= edges.E_max;
    if (alpha) {
        r.alpha = *alpha;
    } else {
        const double far = std::max(std::abs(edges.E_min - E0), std::abs(edges.E_max - E0));
        r.alpha = far > 0.0 ? std::min(1.0, 0.9 * m.N / far) : 1.0;
    }
    return r;
}

Mpo rescaled(const Model& m, const Rescaling& r) {
    const double a = r.alpha / m.N;
    return mpo_from_terms(m.terms, a, a * (m.offset - r.E0));
}

Mpo rescaled(const Model& m, double E0) { return rescaled(m, make_rescaling(m, spectrum_edges(m), E0)); }

} // namespace chebmps
