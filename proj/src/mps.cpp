#include "chebmps/mps.hpp"

#include "chebmps/fit.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace chebmps {

namespace {

using Slice = Eigen::Map<const CMatrix, 0, Eigen::OuterStride<>>;

/// (l, r) slice of a site tensor at physical index s.
Slice phys_slice(const Tensor& a, Index s) {
    const Index d = a.dim(1), r = a.dim(2);
    return Slice(a.data() + s * r, a.dim(0), r, Eigen::OuterStride<>(d * r));
}

Tensor site_from(const CMatrix& m, Index l, Index d, Index r) { return from_matrix(m, {l, d, r}); }

void require_same_length(const Mps& a, const Mps& b) {
    if (a.length() != b.length())
        throw ShapeError("MPS length mismatch");
    for (int n = 0; n < a.length(); ++n)
        if (a.phys_dim(n) != b.phys_dim(n))
            throw ShapeError("MPS physical dimension mismatch");
}

/// Plain transfer-matrix overlap ignoring log_norm.
cplx raw_inner(const Mps& a, const Mps& b) {
    Tensor env({1, 1});
    env(0, 0) = 1.0;
    for (int n = 0; n < a.length(); ++n) {
        Tensor t = contract(env, b.sites[n], {{1, 0}});
        env = contract(a.sites[n].conjugated(), t, {{0, 0}, {1, 1}});
    }
    return env.values()[0];
}

/// Make site n a left isometry, pushing the remainder into site n+1.
void left_step(Mps& s, int n) {
    Tensor& a = s.sites[n];
    const Index l = a.dim(0), d = a.dim(1), r = a.dim(2);
    Eigen::HouseholderQR<Eigen::MatrixXcd> qr(a.matrix(2));
    const Index k = std::min(l * d, r);
    CMatrix q = qr.householderQ() * Eigen::MatrixXcd::Identity(l * d, k);
    CMatrix rr = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
    a = site_from(q, l, d, k);
    Tensor& b = s.sites[n + 1];
    const CMatrix nb = rr * b.matrix(1);
    b = site_from(nb, k, b.dim(1), b.dim(2));
}

/// Make site n a right isometry, pushing the remainder into site n-1.
void right_step(Mps& s, int n) {
    Tensor& a = s.sites[n];
    const Index l = a.dim(0), d = a.dim(1), r = a.dim(2);
    Eigen::HouseholderQR<Eigen::MatrixXcd> qr(a.matrix(1).adjoint());
    const Index k = std::min(l, d * r);
    CMatrix q = qr.householderQ() * Eigen::MatrixXcd::Identity(d * r, k);
    CMatrix rr = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
    a = site_from(q.adjoint(), k, d, r);
    Tensor& b = s.sites[n - 1];
    const CMatrix nb = b.matrix(2) * rr.adjoint();
    b = site_from(nb, b.dim(0), b.dim(1), k);
}

} // namespace

Index Mps::max_bond() const {
    Index m = 1;
    for (const auto& t : sites)
        m = std::max({m, t.dim(0), t.dim(2)});
    return m;
}

Mps from_product(std::span<const CVector> local_states) {
    if (local_states.empty())
        throw std::invalid_argument("from_product: empty chain");
    Mps s;
    for (const auto& v : local_states) {
        if (std::abs(v.norm() - 1.0) > 1e-12)
            throw NormalizationError("from_product: local state not normalized");
        Tensor t({1, v.size(), 1});
        for (Index i = 0; i < v.size(); ++i)
            t(0, i, 0) = v[i];
        s.sites.push_back(std::move(t));
    }
    s.center = 0;
    return s;
}

Mps product_state(int N, const CVector& local) {
    std::vector<CVector> v(N, local);
    return from_product(v);
}

Mps random_mps(int N, Index d, Index D, std::mt19937_64& rng) {
    std::vector<Index> bonds(N + 1, 1);
    for (int b = 1; b < N; ++b) {
        Index left = 1, right = 1;
        for (int i = 0; i < b && left < D; ++i)
            left *= d;
        for (int i = b; i < N && right < D; ++i)
            right *= d;
        bonds[b] = std::min({D, left, right});
    }
    Mps s;
    for (int n = 0; n < N; ++n)
        s.sites.push_back(Tensor::random({bonds[n], d, bonds[n + 1]}, rng));
    return s;
}

cplx inner(const Mps& a, const Mps& b) {
    require_same_length(a, b);
    return raw_inner(a, b) * std::exp(a.log_norm + b.log_norm);
}

double log_norm(const Mps& s) {
    if (s.center)
        return s.log_norm + std::log(s.sites[*s.center].norm());
    return s.log_norm + 0.5 * std::log(std::abs(raw_inner(s, s)));
}

double norm(const Mps& s) { return std::exp(log_norm(s)); }

double fidelity(const Mps& a, const Mps& b) {
    require_same_length(a, b);
    const double na = std::abs(raw_inner(a, a));
    const double nb = std::abs(raw_inner(b, b));
    return std::norm(raw_inner(a, b)) / (na * nb);
}

Mps canonicalize(Mps s, int center) {
    const int N = s.length();
    if (center < 0 || center >= N)
        throw std::out_of_range("canonicalize: center out of range");
    const int left_from = s.center ? std::min(*s.center, center) : 0;
    for (int n = left_from; n < center; ++n)
        left_step(s, n);
    const int right_from = s.center ? std::max(*s.center, center) : N - 1;
    for (int n = right_from; n > center; --n)
        right_step(s, n);
    s.center = center;
    return s;
}

void normalize(Mps& s) {
    if (s.center) {
        Tensor& c = s.sites[*s.center];
        const double nc = c.norm();
        if (!(nc > 0.0) || !std::isfinite(nc))
            throw NormalizationError("normalize: zero or non-finite state");
        c *= cplx(1.0 / nc);
    } else {
        const double nr = std::sqrt(std::abs(raw_inner(s, s)));
        if (!(nr > 0.0) || !std::isfinite(nr))
            throw NormalizationError("normalize: zero or non-finite state");
        const double f = std::pow(nr, -1.0 / s.length());
        for (auto& t : s.sites)
            t *= cplx(f);
    }
    s.log_norm = 0.0;
}

Compressed compress(Mps s, Index d_max, double weight_tol) {
    if (d_max < 1)
        throw std::invalid_argument("compress: d_max must be at least 1");
    const int N = s.length();
    const Mps original = s;
    s = canonicalize(std::move(s), N - 1);
    const double scale = s.sites[N - 1].norm();
    if (scale > 0.0) {
        s.sites[N - 1] *= cplx(1.0 / scale);
        s.log_norm += std::log(scale);
    }
    TruncationPolicy policy{d_max, weight_tol};
    double discarded = 0.0;
    for (int n = N - 1; n > 0; --n) {
        Tensor& a = s.sites[n];
        const Index d = a.dim(1), r = a.dim(2);
        auto f = factorize<cplx>(a.matrix(1), Isometry::right, policy);
        discarded += f.spectrum.discarded_weight;
        const Index k = f.isometry.rows();
        a = site_from(f.isometry, k, d, r);
        Tensor& b = s.sites[n - 1];
        const CMatrix nb = b.matrix(2) * f.carry;
        b = site_from(nb, b.dim(0), b.dim(1), k);
    }
    s.center = 0;
    if (discarded > 0.0) {
        // variational refinement at the bonds chosen by the sweep
        FitOptions opts;
        opts.d_max = s.max_bond();
        opts.expand = false;
        opts.truncate = false;
        opts.min_half_sweeps = 2;
        opts.max_half_sweeps = 8;
        opts.tol = 1e-10;
        const FitTerm term{1.0, nullptr, &original};
        FitResult fit = fit_sum(std::span<const FitTerm>(&term, 1), s, opts);
        s = canonicalize(std::move(fit.state), 0);
    }
    return {std::move(s), discarded};
}

Mps direct_sum(std::span<const std::pair<cplx, Mps>> terms) {
    if (terms.empty())
        throw std::invalid_argument("add: empty term list");
    const Mps& first = terms[0].second;
    const int N = first.length();
    double ref = -std::numeric_limits<double>::infinity();
    for (const auto& [c, m] : terms) {
        require_same_length(first, m);
        if (std::abs(c) > 0.0)
            ref = std::max(ref, std::log(std::abs(c)) + m.log_norm);
    }
    if (!std::isfinite(ref))
        ref = 0.0;
    std::vector<cplx> coef;
    for (const auto& [c, m] : terms)
        coef.push_back(c * std::exp(m.log_norm - ref));

    Mps out;
    out.log_norm = ref;
    if (N == 1) {
        Tensor t({1, first.phys_dim(0), 1});
        for (std::size_t i = 0; i < terms.size(); ++i)
            t += coef[i] * terms[i].second.sites[0];
        out.sites.push_back(std::move(t));
        return out;
    }
    for (int n = 0; n < N; ++n) {
        const Index d = first.phys_dim(n);
        Index L = 0, R = 0;
        for (const auto& [c, m] : terms) {
            L += m.sites[n].dim(0);
            R += m.sites[n].dim(2);
        }
        if (n == 0)
            L = 1;
        if (n == N - 1)
            R = 1;
        Tensor t({L, d, R});
        Index lo = 0, ro = 0;
        for (std::size_t i = 0; i < terms.size(); ++i) {
            const Tensor& a = terms[i].second.sites[n];
            const cplx f = n == 0 ? coef[i] : cplx(1.0);
            for (Index l = 0; l < a.dim(0); ++l)
                for (Index s = 0; s < d; ++s)
                    for (Index r = 0; r < a.dim(2); ++r)
                        t(lo + l, s, ro + r) = f * a(l, s, r);
            if (n != 0)
                lo += a.dim(0);
            if (n != N - 1)
                ro += a.dim(2);
        }
        out.sites.push_back(std::move(t));
    }
    return out;
}

Mps add(std::span<const std::pair<cplx, Mps>> terms, Index d_max, double* discarded_weight) {
    auto c = compress(direct_sum(terms), d_max);
    if (discarded_weight)
        *discarded_weight = c.discarded_weight;
    return std::move(c.state);
}

Mps apply_mpo_exact(const Mpo& w, const Mps& s) {
    if (w.length() != s.length())
        throw ShapeError("apply_mpo: length mismatch");
    Mps out;
    out.log_norm = s.log_norm;
    for (int n = 0; n < s.length(); ++n) {
        const Tensor& wt = w.sites[n];
        const Tensor& a = s.sites[n];
        if (wt.dim(2) != a.dim(1))
            throw ShapeError("apply_mpo: physical dimension mismatch");
        // (wl, so, wr, l, r) -> (wl, l, so, wr, r)
        Tensor t = contract(wt, a, {{2, 1}}).permuted({0, 3, 1, 2, 4});
        out.sites.push_back(std::move(t).reshaped({wt.dim(0) * a.dim(0), wt.dim(1), wt.dim(3) * a.dim(2)}));
    }
    return out;
}

Compressed apply_mpo(const Mpo& w, const Mps& s, Index d_max, double weight_tol) {
    return compress(apply_mpo_exact(w, s), d_max, weight_tol);
}

namespace detail {

Tensor trivial_env() {
    Tensor e({1, 1, 1});
    e(0, 0, 0) = 1.0;
    return e;
}

Tensor left_env_step(const Tensor& env, const Tensor& bra, const Tensor& w, const Tensor& ket) {
    Tensor t1 = contract(env, ket, {{2, 0}});                  // (la, w, s, rb)
    Tensor t2 = contract(t1, w, {{1, 0}, {2, 2}});             // (la, rb, s', w')
    Tensor t3 = contract(bra.conjugated(), t2, {{0, 0}, {1, 2}}); // (ra, rb, w')
    return t3.permuted({0, 2, 1});
}

Tensor right_env_step(const Tensor& env, const Tensor& bra, const Tensor& w, const Tensor& ket) {
    Tensor t1 = contract(ket, env, {{2, 2}});                  // (lb, s, ra, w')
    Tensor t2 = contract(w, t1, {{2, 1}, {3, 3}});             // (w, s', lb, ra)
    Tensor t3 = contract(t2, bra.conjugated(), {{1, 1}, {3, 2}}); // (w, lb, la)
    return t3.permuted({2, 0, 1});
}

} // namespace detail

cplx expectation(const Mps& s, const Mpo& w) {
    if (w.length() != s.length())
        throw ShapeError("expectation: length mismatch");
    Tensor env = detail::trivial_env();
    for (int n = 0; n < s.length(); ++n)
        env = detail::left_env_step(env, s.sites[n], w.sites[n], s.sites[n]);
    return env.values()[0] / raw_inner(s, s);
}

double expectation2(const Mps& s, const Mpo& w) {
    if (w.length() != s.length())
        throw ShapeError("expectation2: length mismatch");
    Tensor env({1, 1, 1, 1});
    env(0, 0, 0, 0) = 1.0;
    for (int n = 0; n < s.length(); ++n) {
        const Tensor& a = s.sites[n];
        const Tensor& wt = w.sites[n];
        Tensor t1 = contract(env, a, {{3, 0}});                         // (la, wb, wk, s, rk)
        Tensor t2 = contract(t1, wt, {{2, 0}, {3, 2}});                 // (la, wb, rk, s2, wk')
        Tensor t3 = contract(t2, wt.conjugated(), {{1, 0}, {3, 1}});    // (la, rk, wk', s1, wb')
        Tensor t4 = contract(t3, a.conjugated(), {{0, 0}, {3, 1}});     // (rk, wk', wb', ra)
        env = t4.permuted({3, 2, 1, 0});
    }
    return env.values()[0].real() / raw_inner(s, s).real();
}

SchmidtSpectrum schmidt(const Mps& s, int cut) {
    if (cut < 1 || cut >= s.length())
        throw std::out_of_range("schmidt: cut out of range");
    const Mps c = canonicalize(s, cut - 1);
    Eigen::BDCSVD<Eigen::MatrixXcd> svd(c.sites[cut - 1].matrix(2));
    const auto& sv = svd.singularValues();
    SchmidtSpectrum out;
    for (Index i = 0; i < sv.size(); ++i)
        if (sv[i] > 1e-14 * sv[0])
            out.values.push_back(sv[i]);
    return out.normalized();
}

std::vector<SchmidtSpectrum> schmidt_all(const Mps& s) {
    Mps c = canonicalize(s, 0);
    std::vector<SchmidtSpectrum> out;
    for (int n = 0; n + 1 < c.length(); ++n) {
        Tensor& a = c.sites[n];
        const Index l = a.dim(0), d = a.dim(1);
        Eigen::BDCSVD<Eigen::MatrixXcd> svd(a.matrix(2), Eigen::ComputeThinU | Eigen::ComputeThinV);
        const auto& sv = svd.singularValues();
        SchmidtSpectrum spec;
        for (Index i = 0; i < sv.size(); ++i)
            if (sv[i] > 1e-14 * sv[0])
                spec.values.push_back(sv[i]);
        out.push_back(spec.normalized());
        const Index k = sv.size();
        a = site_from(svd.matrixU(), l, d, k);
        Tensor& b = c.sites[n + 1];
        const CMatrix nb = sv.asDiagonal() * svd.matrixV().adjoint() * b.matrix(1);
        b = site_from(nb, k, b.dim(1), b.dim(2));
    }
    return out;
}

double entropy(const Mps& s, int cut) { return entropy_bits(schmidt(s, cut)); }

DensityMatrix rdm(const Mps& s, int first, int L_c) {
    if (L_c < 1 || L_c > 10)
        throw std::invalid_argument("rdm: window length must be in 1..10");
    if (first < 0 || first + L_c > s.length())
        throw std::out_of_range("rdm: window outside chain");
    Mps c = canonicalize(s, first);
    normalize(c);
    Index dim = 1;
    for (int k = 0; k < L_c; ++k)
        dim *= c.phys_dim(first + k);
    const Index Dl = c.sites[first].dim(0);
    const Index Dr = c.sites[first + L_c - 1].dim(2);
    const Index chunk = std::max<Index>(1, Index{1 << 22} / std::max<Index>(1, dim * Dr));
    CMatrix rho = CMatrix::Zero(dim, dim);
    for (Index l0 = 0; l0 < Dl; l0 += chunk) {
        const Index nl = std::min(chunk, Dl - l0);
        const Tensor& a0 = c.sites[first];
        // rows (l, S), columns r
        CMatrix x = a0.matrix(2).middleRows(l0 * a0.dim(1), nl * a0.dim(1));
        for (int k = 1; k < L_c; ++k) {
            const Tensor& b = c.sites[first + k];
            CMatrix y = x * b.matrix(1);
            x = Eigen::Map<CMatrix>(y.data(), y.size() / b.dim(2), b.dim(2));
        }
        for (Index l = 0; l < nl; ++l) {
            const auto blk = x.middleRows(l * dim, dim);
            rho.noalias() += blk * blk.adjoint();
        }
    }
    rho = 0.5 * (rho + rho.adjoint()).eval();
    rho /= rho.trace().real();
    return {first, L_c, std::move(rho)};
}

cplx local_expectation(const Mps& s, const CMatrix& op, int site) {
    const int N = s.length();
    if (site < 0 || site >= N)
        throw std::out_of_range("local_expectation: site out of range");
    const Index d = s.phys_dim(site);
    if (op.rows() == d && op.cols() == d) {
        Mps c = canonicalize(s, site);
        const Tensor& a = c.sites[site];
        cplx num = 0.0;
        for (Index p = 0; p < d; ++p)
            for (Index q = 0; q < d; ++q)
                num += op(p, q) * (phys_slice(a, p).conjugate().cwiseProduct(phys_slice(a, q))).sum();
        return num / a.squared_norm();
    }
    if (site + 1 >= N || op.rows() != d * s.phys_dim(site + 1) || op.cols() != op.rows())
        throw ShapeError("local_expectation: operator does not fit the window");
    Mps c = canonicalize(s, site);
    Tensor th = contract(c.sites[site], c.sites[site + 1], {{2, 0}});
    const Index l = th.dim(0), r = th.dim(3), dd = op.rows();
    th = std::move(th).reshaped({l, dd, r});
    Tensor oth({l, dd, r});
    for (Index a = 0; a < l; ++a) {
        Eigen::Map<const CMatrix> in(th.data() + a * dd * r, dd, r);
        Eigen::Map<CMatrix> out(oth.data() + a * dd * r, dd, r);
        out.noalias() = op * in;
    }
    return th.values().dot(oth.values()) / th.squared_norm();
}

CVector to_vector(const Mps& s) {
    const int N = s.length();
    if (N > 26)
        throw std::invalid_argument("to_vector: chain too long");
    CMatrix x = CMatrix::Constant(1, 1, std::exp(s.log_norm));
    for (int n = 0; n < N; ++n) {
        const Tensor& a = s.sites[n];
        const Index d = a.dim(1);
        CMatrix next(x.rows() * d, a.dim(2));
        for (Index p = 0; p < d; ++p)
            next.middleRows(p * x.rows(), x.rows()).noalias() = x * phys_slice(a, p);
        x = std::move(next);
    }
    return Eigen::Map<const CVector>(x.data(), x.size());
}

Mps from_vector(const CVector& v, int N, Index d_max) {
    const Index dim = Index{1} << N;
    if (v.size() != dim)
        throw ShapeError("from_vector: size mismatch");
    // row-major (s_0, ..., s_{N-1}) has site 0 most significant
    CVector psi(dim);
    for (Index i = 0; i < dim; ++i) {
        Index j = 0;
        for (int b = 0; b < N; ++b)
            j |= ((i >> b) & 1) << (N - 1 - b);
        psi[j] = v[i];
    }
    Mps out;
    CMatrix rest = Eigen::Map<const CMatrix>(psi.data(), 1, dim);
    Index l = 1;
    TruncationPolicy policy{d_max, 0.0};
    for (int n = 0; n + 1 < N; ++n) {
        const Index cols = rest.size() / (l * 2);
        CMatrix m = Eigen::Map<const CMatrix>(rest.data(), l * 2, cols);
        auto f = factorize<cplx>(m, Isometry::left, policy);
        const Index k = f.isometry.cols();
        out.sites.push_back(site_from(f.isometry, l, 2, k));
        rest = std::move(f.carry);
        l = k;
    }
    out.sites.push_back(site_from(Eigen::Map<const CMatrix>(rest.data(), l, 2), l, 2, 1));
    out.center = N - 1;
    return out;
}

namespace {
template <typename T>
void put(std::ofstream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T get(std::ifstream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is)
        throw std::runtime_error("load_mps: truncated file");
    return v;
}
} // namespace

void save_mps(const Mps& s, const std::filesystem::path& path) {
    static_assert(std::endian::native == std::endian::little, "binary format is little-endian");
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw std::runtime_error("save_mps: cannot open " + path.string());
    os.write("MPS1", 4);
    const int N = s.length();
    put<std::uint32_t>(os, static_cast<std::uint32_t>(N));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(N ? s.phys_dim(0) : 2));
    for (int b = 0; b <= N; ++b)
        put<std::uint32_t>(os, static_cast<std::uint32_t>(s.bond(b)));
    put<std::int32_t>(os, s.center ? *s.center : -1);
    put<double>(os, s.log_norm);
    for (const auto& t : s.sites)
        os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(cplx)));
}

Mps load_mps(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw std::runtime_error("load_mps: cannot open " + path.string());
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "MPS1", 4) != 0)
        throw std::runtime_error("load_mps: bad magic");
    const auto N = get<std::uint32_t>(is);
    const auto d = get<std::uint32_t>(is);
    std::vector<Index> bonds(N + 1);
    for (auto& b : bonds)
        b = get<std::uint32_t>(is);
    const auto center = get<std::int32_t>(is);
    Mps s;
    s.log_norm = get<double>(is);
    if (center >= 0)
        s.center = center;
    for (std::uint32_t n = 0; n < N; ++n) {
        Tensor t({bonds[n], static_cast<Index>(d), bonds[n + 1]});
        is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(cplx)));
        if (!is)
            throw std::runtime_error("load_mps: truncated file");
        s.sites.push_back(std::move(t));
    }
    return s;
}

} // namespace chebmps
