#pragma once

#include "chebmps/mpo.hpp"
#include "chebmps/tensor.hpp"

#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <utility>
#include <vector>

namespace chebmps {

struct NormalizationError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Open-boundary matrix-product state. Sites are numbered from 0 and site
/// tensors have indices (left, physical, right). The represented vector is
/// exp(log_norm) times the plain contraction of the site tensors.
struct Mps {
    std::vector<Tensor> sites;
    std::optional<int> center;
    double log_norm = 0.0;

    [[nodiscard]] int length() const { return static_cast<int>(sites.size()); }
    [[nodiscard]] Index phys_dim(int n) const { return sites[n].dim(1); }
    /// Bond b sits left of site b; bond(length()) is the right boundary.
    [[nodiscard]] Index bond(int b) const {
        return b < length() ? sites[b].dim(0) : sites.back().dim(2);
    }
    [[nodiscard]] Index max_bond() const;
};

Mps from_product(std::span<const CVector> local_states);
Mps product_state(int N, const CVector& local);
/// Random tensors with bonds min(D, d^n, d^(N-n)); not normalized.
Mps random_mps(int N, Index d, Index D, std::mt19937_64& rng);

cplx inner(const Mps& a, const Mps& b);
double norm(const Mps& s);
/// log of the norm, safe against over/underflow
double log_norm(const Mps& s);
/// |<a|b>|^2 / (<a|a><b|b>)
double fidelity(const Mps& a, const Mps& b);

Mps canonicalize(Mps s, int center);
/// Rescale to unit norm; a canonical state keeps its center.
void normalize(Mps& s);

struct Compressed {
    Mps state;
    double discarded_weight = 0.0;
};

/// Canonicalize, SVD sweep right to left, then variational sweeps while they
/// still gain fidelity. Output is canonical with center 0.
Compressed compress(Mps s, Index d_max, double weight_tol = 0.0);

/// Exact sum with block-diagonal bonds (no compression).
Mps direct_sum(std::span<const std::pair<cplx, Mps>> terms);
Mps add(std::span<const std::pair<cplx, Mps>> terms, Index d_max, double* discarded_weight = nullptr);

/// Exact MPO application: bonds multiply.
Mps apply_mpo_exact(const Mpo& w, const Mps& s);
Compressed apply_mpo(const Mpo& w, const Mps& s, Index d_max, double weight_tol = 0.0);

/// <s|W|s>/<s|s>
cplx expectation(const Mps& s, const Mpo& w);
/// <s|W^dagger W|s>/<s|s> by an exact double-layer contraction
double expectation2(const Mps& s, const Mpo& w);

/// Spectrum across the cut after the first `cut` sites, 1 <= cut <= N-1.
SchmidtSpectrum schmidt(const Mps& s, int cut);
/// Spectra for cuts 1..N-1 in one sweep.
std::vector<SchmidtSpectrum> schmidt_all(const Mps& s);
double entropy(const Mps& s, int cut);

/// Reduced state of sites first..first+length-1; index order puts the first
/// window site most significant.
struct DensityMatrix {
    int first = 0;
    int length = 0;
    CMatrix rho;
};

DensityMatrix rdm(const Mps& s, int first, int L_c);

/// One-site (2x2) or two-site (4x4, sites n and n+1) operator.
cplx local_expectation(const Mps& s, const CMatrix& op, int site);

/// Amplitudes indexed by sum_n s_n 2^n (site 0 least significant).
CVector to_vector(const Mps& s);
/// Exact decomposition of a state vector of N qubits.
Mps from_vector(const CVector& v, int N, Index d_max = std::numeric_limits<Index>::max());

void save_mps(const Mps& s, const std::filesystem::path& path);
Mps load_mps(const std::filesystem::path& path);

namespace detail {
/// Left environment update for <bra| W |ket>: env has indices
/// (bra bond, mpo bond, ket bond).
Tensor left_env_step(const Tensor& env, const Tensor& bra, const Tensor& w, const Tensor& ket);
Tensor right_env_step(const Tensor& env, const Tensor& bra, const Tensor& w, const Tensor& ket);
Tensor trivial_env();
} // namespace detail

} // namespace chebmps
