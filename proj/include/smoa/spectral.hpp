#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "smoa/matrix.hpp"

namespace smoa {

/// Thin SVD W0 = U diag(sigma) V^T with p = min(d_out, d_in).
///
/// sigma is non-increasing. Signs are canonical: the first entry of each U
/// column whose magnitude is above roundoff is non-negative, and V's column
/// carries the matching sign, so identical inputs give identical bytes.
struct SpectralDecomposition {
    Matrix U;      // d_out x p
    Vector sigma;  // p
    Matrix V;      // d_in x p

    Eigen::Index rank_dim() const noexcept { return sigma.size(); }
    Matrix reconstruct() const;
};

SpectralDecomposition decompose(const Matrix& w0);

/// E(i) = (sum_{j<=i} sigma_j^e) / (sum_j sigma_j^e), i = 1..p, returned
/// 0-based. The last entry is exactly 1. `exponent` defaults to first powers.
Vector cumulative_energy(const Vector& sigma, double exponent = 1.0);

/// Disjoint index sets over singular directions, one per subspace.
/// Indices are 0-based here; user-facing text prints them 1-based.
struct EnergyPartition {
    int K = 0;
    std::vector<std::vector<std::size_t>> index_sets;
    std::vector<double> shares;
    std::vector<std::string> diagnostics;

    std::size_t set_size(int k) const { return index_sets.at(static_cast<std::size_t>(k)).size(); }
    std::vector<int> empty_subspaces() const;
};

/// Assigns direction i to subspace k iff (k-1)/K < E(i) <= k/K (1-based k),
/// evaluated literally in double precision. Empty subspaces are allowed and
/// reported through `diagnostics`. Throws ErrorKind::config if K > p.
EnergyPartition partition(const Vector& energy, int K);

/// sigma -> E -> partition in one step.
EnergyPartition partition_spectrum(const Vector& sigma, int K, double exponent = 1.0);

/// Frozen tensor U diag(1_{I_k} * sigma) V^T for 0-based subspace k.
Matrix modulation_tensor(const SpectralDecomposition& dec, const EnergyPartition& part, int k);

/// The (rows, cols) sub-block of modulation_tensor(dec, part, k), computed
/// without forming the full d_out x d_in matrix.
Matrix modulation_block(const SpectralDecomposition& dec, const EnergyPartition& part, int k,
                        IndexRange rows, IndexRange cols);

}  // namespace smoa
