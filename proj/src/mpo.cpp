#include "chebmps/mpo.hpp"

#include <random>

namespace chebmps {

Index Mpo::max_bond() const {
    Index m = 1;
    for (const auto& t : sites)
        m = std::max({m, t.dim(0), t.dim(3)});
    return m;
}

namespace pauli {
CMatrix identity() { return CMatrix::Identity(2, 2); }
CMatrix x() {
    CMatrix m(2, 2);
    m << 0, 1, 1, 0;
    return m;
}
CMatrix y() {
    CMatrix m(2, 2);
    m << 0, cplx(0, -1), cplx(0, 1), 0;
    return m;
}
CMatrix z() {
    CMatrix m(2, 2);
    m << 1, 0, 0, -1;
    return m;
}
const std::vector<CMatrix>& basis() {
    static const std::vector<CMatrix> b{identity(), x(), y(), z()};
    return b;
}
} // namespace pauli

CMatrix kron(const CMatrix& a, const CMatrix& b) {
    CMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Index i = 0; i < a.rows(); ++i)
        for (Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

Mpo identity_mpo(int N, Index d) {
    std::vector<CMatrix> ops(N, CMatrix::Identity(d, d));
    return product_mpo(ops);
}

Mpo product_mpo(std::span<const CMatrix> ops) {
    Mpo w;
    for (const auto& op : ops) {
        if (op.rows() != op.cols())
            throw ShapeError("product_mpo: operators must be square");
        Tensor t({1, op.rows(), op.cols(), 1});
        for (Index a = 0; a < op.rows(); ++a)
            for (Index b = 0; b < op.cols(); ++b)
                t(0, a, b, 0) = op(a, b);
        w.sites.push_back(std::move(t));
    }
    return w;
}

CMatrix to_dense(const Mpo& w) {
    if (w.length() > 14)
        throw std::invalid_argument("to_dense: chain too long");
    std::vector<CMatrix> x(1, CMatrix::Identity(1, 1));
    Index dim = 1;
    for (const auto& t : w.sites) {
        const Index d = t.dim(1);
        std::vector<CMatrix> next(t.dim(3), CMatrix::Zero(dim * d, dim * d));
        for (Index r = 0; r < t.dim(3); ++r)
            for (Index l = 0; l < t.dim(0); ++l)
                for (Index so = 0; so < d; ++so)
                    for (Index si = 0; si < d; ++si) {
                        const cplx c = t(l, so, si, r);
                        if (c != cplx(0))
                            next[r].block(so * dim, si * dim, dim, dim) += c * x[l];
                    }
        x = std::move(next);
        dim *= d;
    }
    return x[0];
}

double hermiticity_defect(const Mpo& w, unsigned seed) {
    const CMatrix h = to_dense(w);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    CVector u(h.rows()), v(h.rows());
    for (Index i = 0; i < h.rows(); ++i) {
        u[i] = cplx(normal(rng), normal(rng));
        v[i] = cplx(normal(rng), normal(rng));
    }
    const cplx a = u.dot(h * v);
    const cplx b = v.dot(h * u);
    return std::abs(a - std::conj(b));
}

} // namespace chebmps
