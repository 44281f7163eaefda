#pragma once

#include "chebmps/mpo.hpp"

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace chebmps {

/// Local terms of H = offset + sum_n h_n. terms[n] (n < N-1) is a 4x4 operator
/// on sites n, n+1 (site n most significant); terms[N-1] is 2x2 on the last
/// site. Every term is traceless and has no part acting on its right site
/// alone.
struct TracelessTerms {
    std::vector<CMatrix> terms;
    double offset = 0.0;
};

/// Redistribute N-1 raw two-site terms. Single-site parts end up in the term
/// whose left site they act on; the leftover on the last site becomes the
/// 2x2 term and constants are collected in the offset.
TracelessTerms tracelessize(std::span<const CMatrix> raw);

/// MPO for scale * sum_n terms[n] + constant * I with the smallest bond the
/// Pauli decomposition allows (2 + rank of each two-site coupling).
Mpo mpo_from_terms(std::span<const CMatrix> terms, double scale = 1.0, double constant = 0.0);

struct Model {
    std::string name;
    int N = 0;
    std::map<std::string, double> params;
    std::vector<CMatrix> terms;
    double offset = 0.0;
    Mpo mpo;
    double h_norm_max = 0.0;
    /// smallest operator norm among the nonzero terms
    double h_min = 0.0;
    /// all matrix elements real in the computational basis
    bool real = true;
};

Model make_model(std::string name, std::map<std::string, double> params, std::span<const CMatrix> raw);

/// J sum zz + g sum x + h sum z
Model build_ising(int N, double J, double g, double h);
/// sum (Jx xx + Jy yy + Jz zz) + h sum z
Model build_xyz(int N, double Jx, double Jy, double Jz, double h);
/// sum_n (-1)^n J s_n.s_{n+1}, bonds counted from n = 1
Model build_staggered_heisenberg(int N, double J = 1.0);

struct Edges {
    double E_min = 0.0;
    double E_max = 0.0;
    /// false when a DMRG run hit the sweep limit
    bool converged = true;
};

/// Lowest eigenvalue of an MPO by two-site DMRG.
double dmrg_ground_energy(const Mpo& w, Index D, int max_sweeps, double tol, bool* converged = nullptr,
                          unsigned seed = 7);

Edges spectrum_edges(const Model& m, Index d_dmrg = 32, int max_sweeps = 12, double tol = 1e-8);

/// H~ = alpha (H - E0) / N
struct Rescaling {
    double E0 = 0.0;
    double alpha = 1.0;
    double E_min = 0.0;
    double E_max = 0.0;
    /// false when E0 lies outside [E_min, E_max]
    bool in_range = true;
};

/// alpha = min(1, 0.9 N / max(|E_min - E0|, |E_max - E0|)) unless overridden.
Rescaling make_rescaling(const Model& m, const Edges& edges, double E0, std::optional<double> alpha = {});

Mpo rescaled(const Model& m, const Rescaling& r);
Mpo rescaled(const Model& m, double E0);

/// Operator norm of a Hermitian matrix.
double operator_norm(const CMatrix& h);

} // namespace chebmps
