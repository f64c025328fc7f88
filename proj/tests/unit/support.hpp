#pragma once

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "smoa/matrix.hpp"

namespace smoa::testing {

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& tag) {
    static std::atomic<int> counter{0};
    auto dir = std::filesystem::temp_directory_path() /
               ("smoa_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

/// Singular values by one-sided Jacobi rotations on the columns of m
/// (or of mᵀ when wide), sorted descending. Slow; test oracle only.
inline std::vector<double> jacobi_singular_values(const Matrix& m) {
    Matrix a = m.rows() >= m.cols() ? m : Matrix(m.transpose());
    const Eigen::Index n = a.cols();
    for (int sweep = 0; sweep < 60; ++sweep) {
        bool rotated = false;
        for (Eigen::Index p = 0; p + 1 < n; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) {
                const double alpha = a.col(p).squaredNorm();
                const double beta = a.col(q).squaredNorm();
                const double gamma = a.col(p).dot(a.col(q));
                if (std::abs(gamma) <= 1e-15 * std::sqrt(alpha * beta) || gamma == 0.0) continue;
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                const Vector cp = a.col(p);
                a.col(p) = c * cp - s * a.col(q);
                a.col(q) = s * cp + c * a.col(q);
            }
        }
        if (!rotated) break;
    }
    std::vector<double> sv(static_cast<std::size_t>(n));
    for (Eigen::Index j = 0; j < n; ++j) sv[static_cast<std::size_t>(j)] = a.col(j).norm();
    std::sort(sv.begin(), sv.end(), std::greater<>());
    return sv;
}

/// Independent rank oracle, same scale-aware tolerance as the library.
inline int jacobi_rank(const Matrix& m, double tol_factor = 1e-10) {
    if (m.size() == 0) return 0;
    const auto s = jacobi_singular_values(m);
    if (s.empty() || s[0] == 0.0) return 0;
    const double tol = tol_factor * s[0] * static_cast<double>(std::max(m.rows(), m.cols()));
    return static_cast<int>(std::count_if(s.begin(), s.end(), [&](double v) { return v > tol; }));
}

}  // namespace smoa::testing
