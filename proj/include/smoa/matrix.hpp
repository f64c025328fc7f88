#pragma once

#include <cstddef>
#include <string_view>

#include <Eigen/Dense>

namespace smoa {

/// Dense real matrix. Used for W0, adapter factors, and sample batches
/// (one sample per row).
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Half-open index interval [begin, end).
struct IndexRange {
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t size() const noexcept { return end - begin; }
    bool empty() const noexcept { return begin == end; }
    friend bool operator==(const IndexRange&, const IndexRange&) = default;
};

bool all_finite(const Matrix& m) noexcept;

/// Throws ErrorKind::data naming `what` if any entry is NaN or infinite.
void require_finite(const Matrix& m, std::string_view what);

/// Throws ErrorKind::dimension unless `m` is rows x cols.
void require_shape(const Matrix& m, Eigen::Index rows, Eigen::Index cols,
                   std::string_view what);

/// Bitwise equality of shape and payload (distinguishes -0.0 from 0.0).
bool bitwise_equal(const Matrix& a, const Matrix& b) noexcept;

}  // namespace smoa
