#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

#include "smoa/matrix.hpp"

namespace smoa {

/// Seeded Gaussian source. Every random quantity in the library is drawn
/// from one of these; nothing reads ambient entropy.
class Rng {
public:
    explicit Rng(std::uint64_t seed);
    /// Independent stream keyed by (seed, tags...).
    Rng(std::uint64_t seed, std::initializer_list<std::uint64_t> tags);

    double normal();
    double uniform();

    /// rows x cols matrix of i.i.d. N(0, stddev^2), filled row by row.
    Matrix gaussian(Eigen::Index rows, Eigen::Index cols, double stddev = 1.0);

    /// Haar-distributed n x n orthogonal matrix (QR of a Gaussian matrix with
    /// the sign of R's diagonal folded into Q).
    Matrix orthogonal(Eigen::Index n);

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

/// Stable 64-bit FNV-1a, used for stream tags and config hashes.
std::uint64_t fnv1a(std::string_view bytes) noexcept;

}  // namespace smoa
