#include "chebmps/fit.hpp"

#include <cmath>
#include <limits>
#include <random>

namespace chebmps {

namespace {

struct Term {
    cplx k;
    const Mpo* op;
    const Mps* y;
    // small operator matrices per site for the two sweep directions
    std::vector<CMatrix> wl, wr;
};

Index mpo_bond(const Term& t, int b) { return t.op ? t.op->bond(b) : 1; }

/// Columns of q extended to `cols` orthonormal columns.
CMatrix complete_columns(const CMatrix& q, Index cols, std::mt19937_64& rng) {
    const Index rows = q.rows(), k = q.cols();
    if (cols <= k)
        return q;
    std::normal_distribution<double> normal;
    CMatrix g(rows, cols - k);
    for (Index i = 0; i < g.size(); ++i)
        g.data()[i] = cplx(normal(rng), normal(rng));
    for (int pass = 0; pass < 2; ++pass)
        g -= q * (q.adjoint() * g);
    Eigen::HouseholderQR<Eigen::MatrixXcd> qr(g);
    CMatrix z = qr.householderQ() * Eigen::MatrixXcd::Identity(rows, cols - k);
    z -= q * (q.adjoint() * z);
    // second orthonormalization keeps the block orthogonal to q at round-off
    Eigen::HouseholderQR<Eigen::MatrixXcd> qr2(z);
    z = qr2.householderQ() * Eigen::MatrixXcd::Identity(rows, cols - k);
    CMatrix out(rows, cols);
    out << q, z;
    return out;
}

/// (chi_l * d', w' * Dr) block from the left environment and the target site.
CMatrix left_block(const Tensor& L, const Tensor& y, const Term& t, int n) {
    const Index chl = L.dim(0), w = L.dim(1), d = y.dim(1), Dr = y.dim(2);
    CMatrix t1 = L.matrix(2) * y.matrix(1);
    if (!t.op)
        return Eigen::Map<const CMatrix>(t1.data(), chl * d, Dr);
    const Index wp = t.op->sites[n].dim(3);
    const Index dp = t.op->sites[n].dim(1);
    Tensor t1t = from_matrix(t1, {chl, w, d, Dr}).permuted({1, 2, 0, 3});
    CMatrix t2 = t.wl[n] * t1t.matrix(2);
    Tensor t2t = from_matrix(t2, {dp, wp, chl, Dr}).permuted({2, 0, 1, 3});
    return t2t.matrix(2);
}

/// (w * Dl, d' * chi_r) block from the right environment and the target site.
CMatrix right_block(const Tensor& R, const Tensor& y, const Term& t, int n) {
    const Index chr = R.dim(0), wp = R.dim(1), Dl = y.dim(0), d = y.dim(1);
    CMatrix u1 = y.matrix(2) * R.matrix(2).transpose();
    if (!t.op)
        return Eigen::Map<const CMatrix>(u1.data(), Dl, d * chr);
    const Index w = t.op->sites[n].dim(0);
    const Index dp = t.op->sites[n].dim(1);
    Tensor u1t = from_matrix(u1, {Dl, d, chr, wp}).permuted({1, 3, 0, 2});
    CMatrix u2 = t.wr[n] * u1t.matrix(2);
    Tensor u2t = from_matrix(u2, {w, dp, Dl, chr}).permuted({0, 2, 1, 3});
    return u2t.matrix(2);
}

struct Factored {
    CMatrix iso;
    double discarded = 0.0;
};

Factored factor_local(const CMatrix& c, Isometry side, bool truncate, const FitOptions& opts) {
    Factored out;
    if (truncate) {
        TruncationPolicy policy{opts.d_max, opts.weight_tol};
        FactorMethod method = FactorMethod::svd;
        if (std::min(c.rows(), c.cols()) >= 128) {
            method = FactorMethod::gram;
            policy.rel_floor = 1e-7;
        }
        auto f = factorize<cplx>(c, side, policy, method);
        out.iso = std::move(f.isometry);
        out.discarded = f.spectrum.discarded_weight;
        return out;
    }
    if (side == Isometry::left) {
        const Index k = std::min(c.rows(), c.cols());
        Eigen::HouseholderQR<Eigen::MatrixXcd> qr(c);
        out.iso = qr.householderQ() * Eigen::MatrixXcd::Identity(c.rows(), k);
    } else {
        const Index k = std::min(c.rows(), c.cols());
        Eigen::HouseholderQR<Eigen::MatrixXcd> qr(c.adjoint());
        CMatrix q = qr.householderQ() * Eigen::MatrixXcd::Identity(c.cols(), k);
        out.iso = q.adjoint();
    }
    return out;
}

Index power_capped(Index d, int e, Index cap) {
    Index v = 1;
    for (int i = 0; i < e && v < cap; ++i)
        v *= d;
    return std::min(v, cap);
}

/// Moves the center norm into log_norm.
void absorb_norm(Mps& s) {
    Tensor& c = s.sites[*s.center];
    const double nc = c.norm();
    if (nc > 0.0 && std::isfinite(nc)) {
        c *= cplx(1.0 / nc);
        s.log_norm += std::log(nc);
    }
}

} // namespace

Index summed_bond(std::span<const FitTerm> terms) {
    if (terms.empty())
        return 0;
    const int N = terms[0].state->length();
    Index best = 1;
    for (int b = 1; b < N; ++b) {
        Index sum = 0;
        for (const auto& t : terms)
            sum += (t.op ? t.op->bond(b) : 1) * t.state->bond(b);
        best = std::max(best, sum);
    }
    return best;
}

FitResult sum_exact(std::span<const FitTerm> terms, const FitOptions& opts) {
    std::vector<std::pair<cplx, Mps>> parts;
    for (const auto& t : terms) {
        if (t.op)
            parts.emplace_back(t.coefficient, apply_mpo_exact(*t.op, *t.state));
        else
            parts.emplace_back(t.coefficient, *t.state);
    }
    auto c = compress(direct_sum(parts), opts.d_max, opts.weight_tol);
    FitResult out;
    out.state = std::move(c.state);
    absorb_norm(out.state);
    out.discarded_weight = c.discarded_weight;
    out.exact = true;
    return out;
}

FitResult sum_terms(std::span<const FitTerm> terms, const Mps* guess, const FitOptions& opts) {
    if (terms.empty())
        throw std::invalid_argument("sum_terms: no terms");
    if (summed_bond(terms) <= std::max(opts.exact_bond, opts.d_max))
        return sum_exact(terms, opts);
    return fit_sum(terms, guess ? *guess : *terms[0].state, opts);
}

FitResult fit_sum(std::span<const FitTerm> in_terms, Mps guess, const FitOptions& opts) {
    const int N = guess.length();
    if (opts.d_max < 1)
        throw std::invalid_argument("fit_sum: d_max must be at least 1");

    std::vector<Term> terms;
    double ref = -std::numeric_limits<double>::infinity();
    for (const auto& t : in_terms) {
        if (!t.state || t.state->length() != N)
            throw ShapeError("fit_sum: term length mismatch");
        if (t.op && t.op->length() != N)
            throw ShapeError("fit_sum: operator length mismatch");
        if (std::abs(t.coefficient) > 0.0)
            ref = std::max(ref, std::log(std::abs(t.coefficient)) + t.state->log_norm);
    }
    if (!std::isfinite(ref))
        throw std::invalid_argument("fit_sum: all coefficients vanish");
    for (const auto& t : in_terms) {
        if (std::abs(t.coefficient) == 0.0)
            continue;
        Term term{t.coefficient * std::exp(t.state->log_norm - ref), t.op, t.state, {}, {}};
        if (t.op) {
            for (int n = 0; n < N; ++n) {
                const Tensor& w = t.op->sites[n];
                const Index wl = w.dim(0), dp = w.dim(1), d = w.dim(2), wr = w.dim(3);
                CMatrix ml(dp * wr, wl * d), mr(wl * dp, d * wr);
                for (Index a = 0; a < wl; ++a)
                    for (Index p = 0; p < dp; ++p)
                        for (Index s = 0; s < d; ++s)
                            for (Index b = 0; b < wr; ++b) {
                                ml(p * wr + b, a * d + s) = w(a, p, s, b);
                                mr(a * dp + p, s * wr + b) = w(a, p, s, b);
                            }
                term.wl.push_back(std::move(ml));
                term.wr.push_back(std::move(mr));
            }
        }
        terms.push_back(std::move(term));
    }
    const std::size_t nt = terms.size();

    const Index extra = opts.extra > 0 ? opts.extra : std::max<Index>(8, opts.d_max / 8);
    const Index cap = opts.truncate ? opts.d_max + extra : opts.d_max;
    std::vector<Index> target(N + 1, 1);
    for (int b = 1; b < N; ++b) {
        Index bound = 0;
        for (const auto& t : terms)
            bound += mpo_bond(t, b) * t.y->bond(b);
        const Index maxdim = std::min(power_capped(guess.phys_dim(0), b, cap), power_capped(guess.phys_dim(0), N - b, cap));
        target[b] = opts.expand ? std::min({maxdim, bound, cap}) : guess.bond(b);
    }

    // left-canonical pass with padding; the added columns meet zero rows of
    // the next site, so the represented state is unchanged
    std::mt19937_64 rng(opts.seed);
    Mps x = std::move(guess);
    for (int n = 0; n + 1 < N; ++n) {
        Tensor& a = x.sites[n];
        const Index l = a.dim(0), d = a.dim(1), r = a.dim(2);
        Eigen::HouseholderQR<Eigen::MatrixXcd> qr(a.matrix(2));
        const Index k = std::min(l * d, r);
        CMatrix q = qr.householderQ() * Eigen::MatrixXcd::Identity(l * d, k);
        CMatrix rr = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
        const Index kp = std::min(l * d, std::max(k, target[n + 1]));
        q = complete_columns(q, kp, rng);
        a = from_matrix(q, {l, d, kp});
        Tensor& b = x.sites[n + 1];
        CMatrix nb = CMatrix::Zero(kp, b.dim(1) * b.dim(2));
        nb.topRows(k) = rr * b.matrix(1);
        b = from_matrix(nb, {kp, b.dim(1), b.dim(2)});
    }
    x.center = N - 1;

    std::vector<std::vector<Tensor>> lenv(nt, std::vector<Tensor>(N + 1)), renv(nt, std::vector<Tensor>(N + 1));
    for (std::size_t t = 0; t < nt; ++t) {
        lenv[t][0] = detail::trivial_env();
        renv[t][N] = detail::trivial_env();
        for (int n = 0; n + 1 < N; ++n) {
            const CMatrix blk = left_block(lenv[t][n], terms[t].y->sites[n], terms[t], n);
            const CMatrix e = x.sites[n].matrix(2).adjoint() * blk;
            lenv[t][n + 1] = from_matrix(e, {x.sites[n].dim(2), mpo_bond(terms[t], n + 1), terms[t].y->bond(n + 1)});
        }
    }

    bool need_truncation = opts.truncate && opts.weight_tol > 0.0;
    for (int b = 1; b < N; ++b)
        need_truncation = need_truncation || (opts.truncate && x.bond(b) > opts.d_max);

    FitResult result;
    std::vector<CMatrix> blocks(nt);
    double prev_end = -1.0;
    bool final_sweep = false;
    bool right_to_left = true;
    for (;;) {
        const bool trunc_now = final_sweep;
        double first_val = 0.0, last_val = 0.0;
        if (right_to_left) {
            for (int n = N - 1; n >= 0; --n) {
                const Index chl = x.bond(n), chr = x.bond(n + 1), d = x.phys_dim(n);
                CMatrix c = CMatrix::Zero(chl, d * chr);
                for (std::size_t t = 0; t < nt; ++t) {
                    blocks[t] = right_block(renv[t][n + 1], terms[t].y->sites[n], terms[t], n);
                    c.noalias() += terms[t].k * (lenv[t][n].matrix(1) * blocks[t]);
                }
                const double val = c.squaredNorm();
                if (n == N - 1)
                    first_val = val;
                if (n == 0) {
                    x.sites[0] = from_matrix(c, {1, d, chr});
                    last_val = val;
                    break;
                }
                Factored f = factor_local(c, Isometry::right, trunc_now, opts);
                result.discarded_weight += f.discarded;
                const Index k = f.iso.rows();
                x.sites[n] = from_matrix(f.iso, {k, d, chr});
                for (std::size_t t = 0; t < nt; ++t) {
                    const CMatrix e = f.iso.conjugate() * blocks[t].transpose();
                    renv[t][n] = from_matrix(e, {k, mpo_bond(terms[t], n), terms[t].y->bond(n)});
                }
                // keep shapes consistent; the content is recomputed next step
                Tensor& prev = x.sites[n - 1];
                if (prev.dim(2) != k)
                    prev = Tensor({prev.dim(0), prev.dim(1), k});
            }
            x.center = 0;
        } else {
            for (int n = 0; n < N; ++n) {
                const Index chl = x.bond(n), chr = x.bond(n + 1), d = x.phys_dim(n);
                CMatrix c = CMatrix::Zero(chl * d, chr);
                for (std::size_t t = 0; t < nt; ++t) {
                    blocks[t] = left_block(lenv[t][n], terms[t].y->sites[n], terms[t], n);
                    c.noalias() += terms[t].k * (blocks[t] * renv[t][n + 1].matrix(1).transpose());
                }
                const double val = c.squaredNorm();
                if (n == 0)
                    first_val = val;
                if (n == N - 1) {
                    x.sites[n] = from_matrix(c, {chl, d, 1});
                    last_val = val;
                    break;
                }
                Factored f = factor_local(c, Isometry::left, trunc_now, opts);
                result.discarded_weight += f.discarded;
                const Index k = f.iso.cols();
                x.sites[n] = from_matrix(f.iso, {chl, d, k});
                for (std::size_t t = 0; t < nt; ++t) {
                    const CMatrix e = f.iso.adjoint() * blocks[t];
                    lenv[t][n + 1] = from_matrix(e, {k, mpo_bond(terms[t], n + 1), terms[t].y->bond(n + 1)});
                }
                Tensor& next = x.sites[n + 1];
                if (next.dim(0) != k)
                    next = Tensor({k, next.dim(1), next.dim(2)});
            }
            x.center = N - 1;
        }
        ++result.half_sweeps;
        right_to_left = !right_to_left;
        if (trunc_now)
            break;
        const double gain = std::max(last_val - first_val, prev_end >= 0.0 ? std::abs(last_val - prev_end) : 0.0);
        prev_end = last_val;
        const bool converged = gain <= opts.tol * last_val;
        const int reserve = need_truncation ? 1 : 0;
        if (result.half_sweeps + reserve >= opts.max_half_sweeps ||
            (converged && result.half_sweeps + reserve >= opts.min_half_sweeps)) {
            if (!need_truncation)
                break;
            final_sweep = true;
        }
    }

    x.log_norm = 0.0;
    absorb_norm(x);
    x.log_norm += ref;
    result.state = std::move(x);
    return result;
}

} // namespace chebmps
