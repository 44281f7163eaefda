#pragma once

#include "chebmps/tensor.hpp"

#include <span>
#include <vector>

namespace chebmps {

/// Site tensors have indices (left, phys-out, phys-in, right); boundary bonds
/// are 1.
struct Mpo {
    std::vector<Tensor> sites;

    [[nodiscard]] int length() const { return static_cast<int>(sites.size()); }
    /// Bond b sits left of site b; bond(length()) is the right boundary.
    [[nodiscard]] Index bond(int b) const {
        return b < length() ? sites[b].dim(0) : sites.back().dim(3);
    }
    [[nodiscard]] Index max_bond() const;
};

namespace pauli {
CMatrix identity();
CMatrix x();
CMatrix y();
CMatrix z();
/// {I, X, Y, Z}
const std::vector<CMatrix>& basis();
} // namespace pauli

/// Kronecker product, first factor most significant.
CMatrix kron(const CMatrix& a, const CMatrix& b);

Mpo identity_mpo(int N, Index d = 2);
/// Tensor product of single-site operators, bond dimension 1.
Mpo product_mpo(std::span<const CMatrix> ops);

/// Dense matrix in the state-vector basis (site 0 is the least significant
/// bit). Intended for N <= 12.
CMatrix to_dense(const Mpo& w);

/// Check on a pair of random vectors; returns |<u|W v> - conj(<v|W u>)|.
double hermiticity_defect(const Mpo& w, unsigned seed = 1);

} // namespace chebmps
