#pragma once

// Dense row-major tensors, pairwise contraction and truncated bipartite
// factorization. Every other module is built on these primitives.
//
// Layout: element (i_0, ..., i_{r-1}) lives at sum_j i_j * stride_j where
// stride_{r-1} = 1 (last index fastest).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace chebmps {

using cplx = std::complex<double>;
using Index = Eigen::Index;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMatrix = RowMatrix<cplx>;
using CVector = Eigen::VectorXcd;

struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct PartitionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

namespace detail {
inline Index product(std::span<const Index> dims) {
    return std::accumulate(dims.begin(), dims.end(), Index{1}, std::multiplies<>());
}

template <typename Scalar>
Scalar conj_if_complex(const Scalar& x) {
    if constexpr (Eigen::NumTraits<Scalar>::IsComplex)
        return std::conj(x);
    else
        return x;
}
} // namespace detail

template <typename Scalar>
class DenseTensor {
  public:
    using Shape = std::vector<Index>;
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    using MatrixMap = Eigen::Map<RowMatrix<Scalar>>;
    using ConstMatrixMap = Eigen::Map<const RowMatrix<Scalar>>;

    /// Rank-0 tensor holding a single zero.
    DenseTensor() : data_(Vector::Zero(1)) {}

    explicit DenseTensor(Shape shape) : shape_(std::move(shape)) {
        check_dims();
        data_ = Vector::Zero(detail::product(shape_));
    }

    DenseTensor(Shape shape, Vector data) : shape_(std::move(shape)), data_(std::move(data)) {
        check_dims();
        if (data_.size() != detail::product(shape_))
            throw ShapeError("tensor data size does not match shape");
    }

    /// Entries with independent standard normal real and imaginary parts.
    static DenseTensor random(Shape shape, std::mt19937_64& rng) {
        DenseTensor t(std::move(shape));
        std::normal_distribution<double> normal;
        for (Index i = 0; i < t.size(); ++i) {
            if constexpr (Eigen::NumTraits<Scalar>::IsComplex)
                t.data_[i] = Scalar(normal(rng), normal(rng));
            else
                t.data_[i] = Scalar(normal(rng));
        }
        return t;
    }

    [[nodiscard]] const Shape& shape() const { return shape_; }
    [[nodiscard]] Index rank() const { return static_cast<Index>(shape_.size()); }
    [[nodiscard]] Index dim(Index i) const { return shape_.at(static_cast<std::size_t>(i)); }
    [[nodiscard]] Index size() const { return data_.size(); }

    [[nodiscard]] Scalar* data() { return data_.data(); }
    [[nodiscard]] const Scalar* data() const { return data_.data(); }
    [[nodiscard]] Vector& values() { return data_; }
    [[nodiscard]] const Vector& values() const { return data_; }

    template <typename... Is>
    Scalar& operator()(Is... idx) {
        return data_[offset({static_cast<Index>(idx)...})];
    }
    template <typename... Is>
    const Scalar& operator()(Is... idx) const {
        return data_[offset({static_cast<Index>(idx)...})];
    }

    [[nodiscard]] Index offset(std::initializer_list<Index> idx) const {
        if (static_cast<Index>(idx.size()) != rank())
            throw ShapeError("wrong number of indices");
        Index off = 0;
        std::size_t j = 0;
        for (Index i : idx) {
            off = off * shape_[j] + i;
            ++j;
        }
        return off;
    }

    /// Row-major matrix view grouping the first `row_rank` indices into rows.
    [[nodiscard]] MatrixMap matrix(Index row_rank) {
        auto [r, c] = split_dims(row_rank);
        return MatrixMap(data_.data(), r, c);
    }
    [[nodiscard]] ConstMatrixMap matrix(Index row_rank) const {
        auto [r, c] = split_dims(row_rank);
        return ConstMatrixMap(data_.data(), r, c);
    }

    [[nodiscard]] DenseTensor reshaped(Shape shape) const& {
        return DenseTensor(std::move(shape), data_);
    }
    [[nodiscard]] DenseTensor reshaped(Shape shape) && {
        return DenseTensor(std::move(shape), std::move(data_));
    }

    /// Output index i is input index perm[i].
    [[nodiscard]] DenseTensor permuted(std::span<const int> perm) const {
        const auto r = static_cast<std::size_t>(rank());
        if (perm.size() != r)
            throw ShapeError("permutation rank mismatch");
        std::vector<bool> seen(r, false);
        bool identity = true;
        for (std::size_t i = 0; i < r; ++i) {
            const int p = perm[i];
            if (p < 0 || static_cast<std::size_t>(p) >= r || seen[p])
                throw ShapeError("invalid permutation");
            seen[p] = true;
            identity = identity && p == static_cast<int>(i);
        }
        if (identity)
            return *this;

        Shape out_shape(r);
        std::vector<Index> in_strides(r), strides(r);
        Index s = 1;
        for (std::size_t i = r; i-- > 0;) {
            in_strides[i] = s;
            s *= shape_[i];
        }
        for (std::size_t i = 0; i < r; ++i) {
            out_shape[i] = shape_[perm[i]];
            strides[i] = in_strides[perm[i]];
        }
        DenseTensor out(out_shape);
        const Index total = size();
        if (total == 0)
            return out;
        const Index inner = out_shape.back();
        const Index inner_stride = strides.back();
        std::vector<Index> counter(r, 0);
        Index base = 0;
        const Scalar* src = data_.data();
        Scalar* dst = out.data_.data();
        for (Index o = 0; o < total; o += inner) {
            for (Index j = 0; j < inner; ++j)
                dst[o + j] = src[base + j * inner_stride];
            for (std::size_t d = r - 1; d-- > 0;) {
                ++counter[d];
                base += strides[d];
                if (counter[d] < out_shape[d])
                    break;
                base -= strides[d] * out_shape[d];
                counter[d] = 0;
            }
        }
        return out;
    }

    [[nodiscard]] DenseTensor permuted(std::initializer_list<int> perm) const {
        return permuted(std::span<const int>(perm.begin(), perm.size()));
    }

    [[nodiscard]] DenseTensor conjugated() const {
        if constexpr (Eigen::NumTraits<Scalar>::IsComplex)
            return DenseTensor(shape_, data_.conjugate());
        else
            return *this;
    }

    [[nodiscard]] double norm() const { return data_.norm(); }
    [[nodiscard]] double squared_norm() const { return data_.squaredNorm(); }
    [[nodiscard]] bool all_finite() const { return data_.allFinite(); }

    DenseTensor& operator*=(Scalar a) {
        data_ *= a;
        return *this;
    }
    DenseTensor& operator+=(const DenseTensor& other) {
        if (other.shape_ != shape_)
            throw ShapeError("tensor addition shape mismatch");
        data_ += other.data_;
        return *this;
    }
    friend DenseTensor operator*(Scalar a, DenseTensor t) {
        t *= a;
        return t;
    }
    friend DenseTensor operator+(DenseTensor a, const DenseTensor& b) {
        a += b;
        return a;
    }

  private:
    void check_dims() const {
        for (Index d : shape_)
            if (d <= 0)
                throw ShapeError("tensor dimensions must be positive");
    }

    [[nodiscard]] std::pair<Index, Index> split_dims(Index row_rank) const {
        if (row_rank < 0 || row_rank > rank())
            throw ShapeError("matrix view row rank out of range");
        const std::span<const Index> dims(shape_);
        return {detail::product(dims.first(static_cast<std::size_t>(row_rank))),
                detail::product(dims.subspan(static_cast<std::size_t>(row_rank)))};
    }

    Shape shape_;
    Vector data_;
};

using Tensor = DenseTensor<cplx>;

using IndexPair = std::pair<int, int>;

/// Sum over the paired indices. Result indices: a's unpaired indices (in
/// order) followed by b's unpaired indices (in order).
template <typename Scalar>
DenseTensor<Scalar> contract(const DenseTensor<Scalar>& a, const DenseTensor<Scalar>& b,
                             std::span<const IndexPair> pairs) {
    const int ra = static_cast<int>(a.rank());
    const int rb = static_cast<int>(b.rank());
    std::vector<bool> paired_a(ra, false), paired_b(rb, false);
    std::vector<int> pa, pb;
    Index inner = 1;
    for (auto [i, j] : pairs) {
        if (i < 0 || i >= ra || j < 0 || j >= rb || paired_a[i] || paired_b[j])
            throw ShapeError("contract: invalid index pair");
        if (a.dim(i) != b.dim(j))
            throw ShapeError("contract: paired dimensions differ (" + std::to_string(a.dim(i)) +
                             " vs " + std::to_string(b.dim(j)) + ")");
        paired_a[i] = paired_b[j] = true;
        pa.push_back(i);
        pb.push_back(j);
        inner *= a.dim(i);
    }
    std::vector<int> free_a, free_b;
    typename DenseTensor<Scalar>::Shape out_shape;
    Index rows = 1, cols = 1;
    for (int i = 0; i < ra; ++i)
        if (!paired_a[i]) {
            free_a.push_back(i);
            out_shape.push_back(a.dim(i));
            rows *= a.dim(i);
        }
    for (int j = 0; j < rb; ++j)
        if (!paired_b[j]) {
            free_b.push_back(j);
            out_shape.push_back(b.dim(j));
            cols *= b.dim(j);
        }

    auto is_identity = [](const std::vector<int>& first, const std::vector<int>& second) {
        int k = 0;
        for (int v : first)
            if (v != k++)
                return false;
        for (int v : second)
            if (v != k++)
                return false;
        return true;
    };

    // Avoid a copy whenever the paired block is already leading or trailing.
    DenseTensor<Scalar> a_perm, b_perm;
    const DenseTensor<Scalar>* a_use = &a;
    const DenseTensor<Scalar>* b_use = &b;
    bool a_transposed = false, b_transposed = false;
    if (is_identity(free_a, pa)) {
    } else if (is_identity(pa, free_a)) {
        a_transposed = true;
    } else {
        std::vector<int> perm = free_a;
        perm.insert(perm.end(), pa.begin(), pa.end());
        a_perm = a.permuted(perm);
        a_use = &a_perm;
    }
    if (is_identity(pb, free_b)) {
    } else if (is_identity(free_b, pb)) {
        b_transposed = true;
    } else {
        std::vector<int> perm = pb;
        perm.insert(perm.end(), free_b.begin(), free_b.end());
        b_perm = b.permuted(perm);
        b_use = &b_perm;
    }

    using Map = Eigen::Map<const RowMatrix<Scalar>>;
    const Map am = a_transposed ? Map(a_use->data(), inner, rows) : Map(a_use->data(), rows, inner);
    const Map bm = b_transposed ? Map(b_use->data(), cols, inner) : Map(b_use->data(), inner, cols);

    DenseTensor<Scalar> out(out_shape);
    auto om = Eigen::Map<RowMatrix<Scalar>>(out.data(), rows, cols);
    if (!a_transposed && !b_transposed)
        om.noalias() = am * bm;
    else if (a_transposed && !b_transposed)
        om.noalias() = am.transpose() * bm;
    else if (!a_transposed && b_transposed)
        om.noalias() = am * bm.transpose();
    else
        om.noalias() = am.transpose() * bm.transpose();
    return out;
}

template <typename Scalar>
DenseTensor<Scalar> contract(const DenseTensor<Scalar>& a, const DenseTensor<Scalar>& b,
                             std::initializer_list<IndexPair> pairs) {
    return contract(a, b, std::span<const IndexPair>(pairs.begin(), pairs.size()));
}

// ---------------------------------------------------------------------------
// Truncated factorization

/// Descending singular values across a cut, with the squared weight that was
/// cut away expressed as a fraction of the total squared weight.
struct SchmidtSpectrum {
    std::vector<double> values;
    double discarded_weight = 0.0;

    /// Kept values rescaled so that their squares sum to one.
    [[nodiscard]] SchmidtSpectrum normalized() const {
        double w = 0.0;
        for (double v : values)
            w += v * v;
        SchmidtSpectrum out = *this;
        if (w > 0.0) {
            const double s = 1.0 / std::sqrt(w);
            for (double& v : out.values)
                v *= s;
        }
        return out;
    }
};

/// Von Neumann entropy in bits of the normalized spectrum.
inline double entropy_bits(const SchmidtSpectrum& spectrum) {
    double w = 0.0;
    for (double v : spectrum.values)
        w += v * v;
    if (w <= 0.0)
        return 0.0;
    double s = 0.0;
    for (double v : spectrum.values) {
        const double p = v * v / w;
        if (p > 0.0)
            s -= p * std::log2(p);
    }
    return std::max(s, 0.0);
}

struct TruncationPolicy {
    Index d_max = std::numeric_limits<Index>::max();
    double weight_tol = 0.0;
    /// Singular values below rel_floor * largest are always dropped.
    double rel_floor = 1e-14;
};

/// Number of leading values to keep. `sv` must be sorted descending.
inline Index choose_rank(std::span<const double> sv, const TruncationPolicy& policy,
                         double* discarded_weight = nullptr) {
    if (policy.d_max < 1)
        throw std::invalid_argument("d_max must be at least 1");
    double total = 0.0;
    for (double v : sv)
        total += v * v;
    if (sv.empty() || total <= 0.0) {
        if (discarded_weight)
            *discarded_weight = 0.0;
        return 1;
    }
    const Index n = static_cast<Index>(sv.size());
    Index above = 0;
    while (above < n && sv[above] > policy.rel_floor * sv[0])
        ++above;
    above = std::max<Index>(above, 1);
    double tail = 0.0;
    for (Index i = above; i < n; ++i)
        tail += sv[i] * sv[i];
    Index k = above;
    while (k > 1 && tail + sv[k - 1] * sv[k - 1] <= policy.weight_tol * total) {
        tail += sv[k - 1] * sv[k - 1];
        --k;
    }
    // Never split a degenerate multiplet unless the hard cap forces it.
    while (k < above && std::abs(sv[k] - sv[k - 1]) <= 1e-12 * sv[k - 1])
        ++k;
    k = std::min(k, policy.d_max);
    if (discarded_weight) {
        double kept = 0.0;
        for (Index i = 0; i < k; ++i)
            kept += sv[i] * sv[i];
        *discarded_weight = std::max(0.0, (total - kept) / total);
    }
    return k;
}

enum class Isometry { left, right };
enum class FactorMethod { svd, gram };

/// m ~= iso * carry (Isometry::left, iso has orthonormal columns) or
/// m ~= carry * iso (Isometry::right, iso has orthonormal rows).
template <typename Scalar>
struct Factorization {
    RowMatrix<Scalar> isometry;
    RowMatrix<Scalar> carry;
    SchmidtSpectrum spectrum;
};

/// Truncated factorization of a matrix. FactorMethod::gram diagonalizes the
/// smaller Gram matrix instead of running an SVD; it is several times faster
/// but only resolves singular values above ~1e-8 of the largest, so callers
/// pass a matching rel_floor.
template <typename Scalar>
Factorization<Scalar> factorize(const RowMatrix<Scalar>& m, Isometry side, const TruncationPolicy& policy,
                                FactorMethod method = FactorMethod::svd) {
    using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    Factorization<Scalar> out;
    const Index rows = m.rows(), cols = m.cols();
    if (method == FactorMethod::svd) {
        Eigen::BDCSVD<Mat> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
        const auto& s = svd.singularValues();
        std::vector<double> sv(s.data(), s.data() + s.size());
        const Index k = choose_rank(sv, policy, &out.spectrum.discarded_weight);
        out.spectrum.values.assign(sv.begin(), sv.begin() + k);
        if (s.size() == 0 || s[0] <= 0.0) {
            // zero matrix: keep a single zero direction
            if (side == Isometry::left) {
                out.isometry = RowMatrix<Scalar>::Zero(rows, 1);
                out.isometry(0, 0) = Scalar(1);
                out.carry = RowMatrix<Scalar>::Zero(1, cols);
            } else {
                out.isometry = RowMatrix<Scalar>::Zero(1, cols);
                out.isometry(0, 0) = Scalar(1);
                out.carry = RowMatrix<Scalar>::Zero(rows, 1);
            }
            out.spectrum.values = {0.0};
            return out;
        }
        const Eigen::VectorXd sk = s.head(k);
        if (side == Isometry::left) {
            out.isometry = svd.matrixU().leftCols(k);
            out.carry = sk.asDiagonal() * svd.matrixV().leftCols(k).adjoint();
        } else {
            out.isometry = svd.matrixV().leftCols(k).adjoint();
            out.carry = svd.matrixU().leftCols(k) * sk.asDiagonal();
        }
        return out;
    }

    // Gram route: diagonalize the smaller of m m^dagger and m^dagger m.
    const bool row_gram = rows <= cols;
    Mat g = row_gram ? Mat(m * m.adjoint()) : Mat(m.adjoint() * m);
    Eigen::SelfAdjointEigenSolver<Mat> eig(g);
    const Index n = g.rows();
    std::vector<double> sv(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i)
        sv[i] = std::sqrt(std::max(eig.eigenvalues()[n - 1 - i], 0.0));
    const Index k = choose_rank(sv, policy, &out.spectrum.discarded_weight);
    out.spectrum.values.assign(sv.begin(), sv.begin() + k);
    Mat vecs = eig.eigenvectors().rightCols(k).rowwise().reverse();
    if (side == Isometry::left) {
        if (row_gram) {
            out.isometry = vecs;
            out.carry = vecs.adjoint() * m;
        } else {
            // m V = Q R  =>  m ~= Q (R V^dagger)
            Mat w = m * vecs;
            Eigen::HouseholderQR<Mat> qr(w);
            Mat q = qr.householderQ() * Mat::Identity(rows, k);
            Mat r = qr.matrixQR().topRows(k).template triangularView<Eigen::Upper>();
            out.isometry = q;
            out.carry = r * vecs.adjoint();
        }
    } else {
        if (!row_gram) {
            out.isometry = vecs.adjoint();
            out.carry = m * vecs;
        } else {
            // U^dagger m = L Q with Q orthonormal rows, via QR of its adjoint
            Mat w = (vecs.adjoint() * m).adjoint();
            Eigen::HouseholderQR<Mat> qr(w);
            Mat q = qr.householderQ() * Mat::Identity(cols, k);
            Mat r = qr.matrixQR().topRows(k).template triangularView<Eigen::Upper>();
            out.isometry = q.adjoint();
            out.carry = vecs * r.adjoint();
        }
    }
    return out;
}

template <typename Scalar>
struct Split {
    DenseTensor<Scalar> left;
    DenseTensor<Scalar> right;
    SchmidtSpectrum spectrum;
};

/// Factor t across the bipartition (left_indices | rest) as
/// left * diag(spectrum) * right. `left` has indices (left_indices..., k) and
/// is an isometry on the grouped left indices; `right` has indices
/// (k, remaining indices in ascending order) with orthonormal rows.
template <typename Scalar>
Split<Scalar> split_truncate(const DenseTensor<Scalar>& t, std::span<const int> left_indices, Index d_max,
                             double weight_tol) {
    const int r = static_cast<int>(t.rank());
    if (left_indices.empty() || static_cast<int>(left_indices.size()) >= r)
        throw PartitionError("split_truncate: left index set must be a proper nonempty subset");
    std::vector<bool> is_left(r, false);
    std::vector<int> perm;
    typename DenseTensor<Scalar>::Shape lshape, rshape;
    for (int i : left_indices) {
        if (i < 0 || i >= r || is_left[i])
            throw PartitionError("split_truncate: invalid left index");
        is_left[i] = true;
        perm.push_back(i);
        lshape.push_back(t.dim(i));
    }
    for (int i = 0; i < r; ++i)
        if (!is_left[i]) {
            perm.push_back(i);
            rshape.push_back(t.dim(i));
        }
    const DenseTensor<Scalar> tp = t.permuted(perm);
    const RowMatrix<Scalar> m = tp.matrix(static_cast<Index>(lshape.size()));

    using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    Eigen::BDCSVD<Mat> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& s = svd.singularValues();
    std::vector<double> sv(s.data(), s.data() + s.size());
    TruncationPolicy policy;
    policy.d_max = d_max;
    policy.weight_tol = weight_tol;
    Split<Scalar> out;
    const Index k = choose_rank(sv, policy, &out.spectrum.discarded_weight);
    out.spectrum.values.assign(sv.begin(), sv.begin() + k);
    lshape.push_back(k);
    rshape.insert(rshape.begin(), k);
    RowMatrix<Scalar> u = svd.matrixU().leftCols(k);
    RowMatrix<Scalar> vh = svd.matrixV().leftCols(k).adjoint();
    out.left = DenseTensor<Scalar>(lshape, Eigen::Map<const typename DenseTensor<Scalar>::Vector>(u.data(), u.size()));
    out.right =
        DenseTensor<Scalar>(rshape, Eigen::Map<const typename DenseTensor<Scalar>::Vector>(vh.data(), vh.size()));
    return out;
}

template <typename Scalar>
Split<Scalar> split_truncate(const DenseTensor<Scalar>& t, std::initializer_list<int> left_indices, Index d_max,
                             double weight_tol) {
    return split_truncate(t, std::span<const int>(left_indices.begin(), left_indices.size()), d_max, weight_tol);
}

/// Tensor wrapping a copy of a row-major matrix.
template <typename Scalar>
DenseTensor<Scalar> from_matrix(const RowMatrix<Scalar>& m, typename DenseTensor<Scalar>::Shape shape) {
    return DenseTensor<Scalar>(std::move(shape),
                               Eigen::Map<const typename DenseTensor<Scalar>::Vector>(m.data(), m.size()));
}

} // namespace chebmps
