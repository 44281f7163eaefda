#pragma once

#include "chebmps/exact.hpp"
#include "chebmps/hamiltonian.hpp"
#include "chebmps/mps.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

namespace chebmps::testing {

inline CVector y_plus() {
    CVector v(2);
    v << 1.0, cplx(0.0, 1.0);
    return v / std::sqrt(2.0);
}

inline CVector basis(int s) {
    CVector v = CVector::Zero(2);
    v(s) = 1.0;
    return v;
}

inline Model default_ising(int N) { return build_ising(N, 1.0, -1.05, 0.5); }
inline Model default_xyz(int N) { return build_xyz(N, 1.1, -1.0, 0.9, 1.2); }

inline Mps random_state(int N, Index D, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Mps s = random_mps(N, 2, D, rng);
    normalize(s);
    return s;
}

inline CVector random_vector(Index dim, std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    CVector v(dim);
    for (Index i = 0; i < dim; ++i)
        v(i) = cplx(g(rng), g(rng));
    return v.normalized();
}

} // namespace chebmps::testing
