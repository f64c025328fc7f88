#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string_view>
#include <vector>

#include "smoa/config.hpp"
#include "smoa/matrix.hpp"
#include "smoa/random.hpp"
#include "smoa/spectral.hpp"

namespace smoa {

enum class AdapterKind {
    smoa,         // per-subspace (B_k A_k) ⊙ spectral mask, block-diagonal
    lora,         // scale * B A over the whole weight
    block_lora,   // K independent LoRA blocks on the diagonal
    hadamard_w0,  // scale * (B A) ⊙ W0 over the whole weight
};

inline constexpr AdapterKind kAllKinds[] = {AdapterKind::lora, AdapterKind::block_lora, AdapterKind::hadamard_w0,
                                            AdapterKind::smoa};

std::string_view to_string(AdapterKind kind) noexcept;
AdapterKind parse_adapter_kind(std::string_view name);

/// K contiguous, disjoint row ranges covering [0, d_out) and column ranges
/// covering [0, d_in). The first d mod K blocks get the extra row/column.
struct BlockLayout {
    int K = 0;
    std::vector<IndexRange> rows;
    std::vector<IndexRange> cols;

    static BlockLayout even(int d_out, int d_in, int K);
    static std::vector<IndexRange> split(int n, int K);
};

/// Per-subspace ranks: floor(r/K) (+1 for the first r mod K) in budget
/// mode, r everywhere in flexible mode.
std::vector<int> subspace_ranks(RankMode mode, int r, int K);

/// One placed block of an adapter update:
///   delta[rows, cols] += scale * (B A) ⊙ mask   (mask omitted when absent).
struct AdapterBlock {
    IndexRange rows;
    IndexRange cols;
    int rank = 0;
    double scale = 1.0;
    Matrix A;                   // rank x cols.size()
    Matrix B;                   // rows.size() x rank
    std::optional<Matrix> mask; // frozen, rows.size() x cols.size()
};

/// SMoA and the three baselines share one representation: a sum of
/// rank-limited factor products on disjoint (or single full-size) blocks,
/// each optionally Hadamard-masked by a frozen matrix. Only the factors
/// A_k, B_k are mutable; masks are fixed at construction.
class Adapter {
public:
    Adapter(AdapterKind kind, int d_out, int d_in, std::vector<AdapterBlock> blocks,
            std::optional<EnergyPartition> partition = std::nullopt);

    AdapterKind kind() const noexcept { return kind_; }
    int d_out() const noexcept { return d_out_; }
    int d_in() const noexcept { return d_in_; }
    int num_blocks() const noexcept { return static_cast<int>(blocks_.size()); }

    const AdapterBlock& block(int k) const { return blocks_.at(static_cast<std::size_t>(k)); }
    Matrix& a(int k) { return blocks_.at(static_cast<std::size_t>(k)).A; }
    Matrix& b(int k) { return blocks_.at(static_cast<std::size_t>(k)).B; }
    const Matrix& a(int k) const { return block(k).A; }
    const Matrix& b(int k) const { return block(k).B; }

    /// Energy partition behind the masks (SMoA only).
    const std::optional<EnergyPartition>& partition() const noexcept { return partition_; }

    /// Number of trainable entries: sum_k rank_k * (rows_k + cols_k).
    std::int64_t param_count() const noexcept;

    /// Total number of trainable tensors (A and B for every block).
    std::size_t num_trainable_tensors() const noexcept { return 2 * blocks_.size(); }

    /// Overwrites every A_k and B_k with i.i.d. N(0, stddev^2) draws.
    void randomize_factors(Rng& rng, double stddev = 1.0);

private:
    AdapterKind kind_;
    int d_out_;
    int d_in_;
    std::vector<AdapterBlock> blocks_;
    std::optional<EnergyPartition> partition_;
};

/// Builds SMoA: SVD -> cumulative energy -> partition -> masks (the k-th
/// diagonal block of the k-th modulation tensor). A ~ N(0, init_std^2), B = 0.
Adapter build_smoa(const RunConfig& cfg, const Matrix& w0);
Adapter build_smoa(const RunConfig& cfg, const Matrix& w0, const SpectralDecomposition& dec);

Adapter build_baseline(AdapterKind kind, const RunConfig& cfg, const Matrix& w0);

/// Dispatches to build_smoa or build_baseline.
Adapter build_adapter(AdapterKind kind, const RunConfig& cfg, const Matrix& w0);

/// The update matrix, d_out x d_in.
Matrix delta(const Adapter& adapter);

/// W0 + delta(adapter). W0 is not modified.
Matrix merge(const Adapter& adapter, const Matrix& w0);

/// Closed-form trainable-parameter count for `kind` built from `cfg`.
/// lora and hadamard_w0 ignore K; block_lora honours cfg.mode like SMoA.
std::int64_t param_count(AdapterKind kind, const RunConfig& cfg);

/// Config for a baseline whose parameter count matches SMoA built from
/// `smoa_cfg`. In budget mode lora/hadamard_w0 get rank r/K (K must divide
/// r); block_lora keeps (r, K). Returns nullopt when no exact match exists.
std::optional<RunConfig> budget_matched_config(AdapterKind kind, const RunConfig& smoa_cfg);

/// Writes `<prefix>.manifest.json` plus one SMOA binary file per tensor.
/// Returns the paths written, manifest first.
std::vector<std::filesystem::path> save_adapter(const Adapter& adapter, const std::filesystem::path& prefix);
Adapter load_adapter(const std::filesystem::path& manifest_path);

}  // namespace smoa
