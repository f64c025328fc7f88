#include "smoa/matrix.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include <fmt/format.h>

#include "smoa/error.hpp"

namespace smoa {

bool all_finite(const Matrix& m) noexcept {
    return m.allFinite();
}

void require_finite(const Matrix& m, std::string_view what) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (!std::isfinite(m(i, j))) {
                fail(ErrorKind::data, fmt::format("{}: non-finite entry at ({}, {})", what, i, j));
            }
        }
    }
}

void require_shape(const Matrix& m, Eigen::Index rows, Eigen::Index cols, std::string_view what) {
    if (m.rows() != rows || m.cols() != cols) {
        fail(ErrorKind::dimension,
             fmt::format("{}: expected {}x{}, got {}x{}", what, rows, cols, m.rows(), m.cols()));
    }
}

bool bitwise_equal(const Matrix& a, const Matrix& b) noexcept {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        return false;
    }
    return std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

}  // namespace smoa
