#include "smoa/spectral.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "smoa/error.hpp"

namespace smoa {

Matrix SpectralDecomposition::reconstruct() const {
    return U * sigma.asDiagonal() * V.transpose();
}

std::vector<int> EnergyPartition::empty_subspaces() const {
    std::vector<int> out;
    for (int k = 0; k < K; ++k) {
        if (index_sets[static_cast<std::size_t>(k)].empty()) out.push_back(k);
    }
    return out;
}

SpectralDecomposition decompose(const Matrix& w0) {
    if (w0.rows() == 0 || w0.cols() == 0) {
        fail(ErrorKind::dimension, "decompose: empty matrix");
    }
    require_finite(w0, "decompose");
    Eigen::JacobiSVD<Matrix> svd(w0, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (svd.info() != Eigen::Success) {
        fail(ErrorKind::numerical, "decompose: SVD did not converge");
    }
    SpectralDecomposition dec{svd.matrixU(), svd.singularValues(), svd.matrixV()};
    if (!dec.U.allFinite() || !dec.V.allFinite() || !dec.sigma.allFinite()) {
        fail(ErrorKind::numerical, "decompose: SVD produced non-finite factors");
    }

    // Canonical signs.
    for (Eigen::Index j = 0; j < dec.U.cols(); ++j) {
        auto col = dec.U.col(j);
        const double cutoff = 64 * std::numeric_limits<double>::epsilon() * col.cwiseAbs().maxCoeff();
        for (Eigen::Index i = 0; i < col.size(); ++i) {
            if (std::abs(col(i)) > cutoff) {
                if (col(i) < 0.0) {
                    col = -col;
                    dec.V.col(j) = -dec.V.col(j);
                }
                break;
            }
        }
    }
    return dec;
}

Vector cumulative_energy(const Vector& sigma, double exponent) {
    if (sigma.size() == 0) {
        fail(ErrorKind::dimension, "cumulative_energy: empty spectrum");
    }
    for (Eigen::Index i = 0; i < sigma.size(); ++i) {
        if (!(sigma(i) >= 0.0) || !std::isfinite(sigma(i))) {
            fail(ErrorKind::validation, fmt::format("cumulative_energy: sigma[{}] is negative or non-finite", i));
        }
        if (i > 0 && sigma(i) > sigma(i - 1)) {
            fail(ErrorKind::validation, fmt::format("cumulative_energy: sigma increases at index {}", i));
        }
    }
    Vector weight = exponent == 1.0 ? sigma : Vector(sigma.array().pow(exponent));
    Vector partial(weight.size());
    double running = 0.0;
    for (Eigen::Index i = 0; i < weight.size(); ++i) {
        running += weight(i);
        partial(i) = running;
    }
    const double total = partial(partial.size() - 1);
    if (!(total > 0.0)) {
        fail(ErrorKind::numerical, "cumulative_energy: degenerate spectrum (all singular values are zero)");
    }
    return partial / total;
}

EnergyPartition partition(const Vector& energy, int K) {
    const auto p = static_cast<int>(energy.size());
    if (K < 1) {
        fail(ErrorKind::validation, "K must be ≥ 1");
    }
    if (K > p) {
        fail(ErrorKind::config, fmt::format("K must be ≤ p = min(d_out, d_in) = {} (got K = {})", p, K));
    }
    EnergyPartition part;
    part.K = K;
    part.index_sets.resize(static_cast<std::size_t>(K));
    part.shares.assign(static_cast<std::size_t>(K), 0.0);

    // E carries rounding of order p·eps; values that close to a bin edge count
    // as on it, so a flat spectrum with K = p gives one index per bin
    const double tie = 8.0 * p * std::numeric_limits<double>::epsilon();
    for (Eigen::Index i = 0; i < energy.size(); ++i) {
        const double e = energy(i);
        if (!(e > 0.0)) {
            fail(ErrorKind::numerical, fmt::format("partition: E({}) = {} lies outside (0, 1]", i + 1, e));
        }
        int assigned = -1;
        for (int k = 1; k <= K; ++k) {
            if (e <= static_cast<double>(k) / K + tie) {
                assigned = k - 1;
                break;
            }
        }
        if (assigned < 0) {
            fail(ErrorKind::numerical, fmt::format("partition: E({}) = {} lies outside (0, 1]", i + 1, e));
        }
        part.index_sets[static_cast<std::size_t>(assigned)].push_back(static_cast<std::size_t>(i));
    }

    // Shares telescope over E, i.e. over the partial sums of sigma.
    for (int k = 0; k < K; ++k) {
        const auto& set = part.index_sets[static_cast<std::size_t>(k)];
        if (set.empty()) continue;
        const double before = set.front() == 0 ? 0.0 : energy(static_cast<Eigen::Index>(set.front()) - 1);
        part.shares[static_cast<std::size_t>(k)] = energy(static_cast<Eigen::Index>(set.back())) - before;
    }

    const auto empty = part.empty_subspaces();
    if (!empty.empty()) {
        std::vector<std::string> names;
        for (int k : empty) names.push_back(fmt::format("I_{}", k + 1));
        part.diagnostics.push_back(fmt::format(
            "empty subspace(s): {} (a dominant singular value spans several 1/K energy bins; "
            "the matching updates are identically zero)",
            fmt::join(names, ", ")));
    }
    return part;
}

EnergyPartition partition_spectrum(const Vector& sigma, int K, double exponent) {
    return partition(cumulative_energy(sigma, exponent), K);
}

namespace {
// Columns of U/V (restricted to the given rows) that belong to subspace k,
// pre-scaled by sigma on the U side.
Matrix subspace_product(const SpectralDecomposition& dec, const EnergyPartition& part, int k, IndexRange rows,
                        IndexRange cols) {
    if (k < 0 || k >= part.K) {
        fail(ErrorKind::validation, fmt::format("subspace index {} out of range [0, {})", k, part.K));
    }
    const auto& set = part.index_sets[static_cast<std::size_t>(k)];
    const auto n = static_cast<Eigen::Index>(set.size());
    const auto nr = static_cast<Eigen::Index>(rows.size());
    const auto nc = static_cast<Eigen::Index>(cols.size());
    if (n == 0) return Matrix::Zero(nr, nc);
    Matrix left(nr, n);
    Matrix right(nc, n);
    for (Eigen::Index t = 0; t < n; ++t) {
        const auto idx = static_cast<Eigen::Index>(set[static_cast<std::size_t>(t)]);
        left.col(t) = dec.U.col(idx).segment(static_cast<Eigen::Index>(rows.begin), nr) * dec.sigma(idx);
        right.col(t) = dec.V.col(idx).segment(static_cast<Eigen::Index>(cols.begin), nc);
    }
    return left * right.transpose();
}
}  // namespace

Matrix modulation_tensor(const SpectralDecomposition& dec, const EnergyPartition& part, int k) {
    return subspace_product(dec, part, k, {0, static_cast<std::size_t>(dec.U.rows())},
                            {0, static_cast<std::size_t>(dec.V.rows())});
}

Matrix modulation_block(const SpectralDecomposition& dec, const EnergyPartition& part, int k, IndexRange rows,
                        IndexRange cols) {
    if (rows.end > static_cast<std::size_t>(dec.U.rows()) || cols.end > static_cast<std::size_t>(dec.V.rows())) {
        fail(ErrorKind::dimension, "modulation_block: block lies outside the weight");
    }
    return subspace_product(dec, part, k, rows, cols);
}

}  // namespace smoa
