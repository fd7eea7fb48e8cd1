#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <random>

namespace cdm {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Rng = std::mt19937_64;

inline Vec standard_normal(Rng& rng, int dim) {
    std::normal_distribution<double> n01(0.0, 1.0);
    Vec v(dim);
    for (int i = 0; i < dim; ++i) v(i) = n01(rng);
    return v;
}

inline Mat standard_normal_mat(Rng& rng, int rows, int cols) {
    std::normal_distribution<double> n01(0.0, 1.0);
    Mat m(rows, cols);
    // column-major fill so a matrix equals its columns drawn one after another
    for (int j = 0; j < cols; ++j)
        for (int i = 0; i < rows; ++i) m(i, j) = n01(rng);
    return m;
}

// log N(x; 0, I)
inline double log_std_normal(const Vec& x) {
    constexpr double log_2pi = 1.8378770664093454836;
    return -0.5 * (x.size() * log_2pi + x.squaredNorm());
}

// Deterministic per-stream RNG derived from a base seed (splitmix64 step).
inline Rng derived_rng(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return Rng(z ^ (z >> 31));
}

}  // namespace cdm
