#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "smoa/adapters.hpp"
#include "smoa/io.hpp"
#include "smoa/matrix.hpp"
#include "smoa/training.hpp"

namespace smoa {

inline constexpr double kDefaultRankTolerance = 1e-10;

/// Count of singular values above tol_factor * sigma_max * max(rows, cols).
int numerical_rank(const Matrix& m, double tol_factor = kDefaultRankTolerance);

/// Upper bound on rank(delta) implied by the adapter's structure:
///   lora, block_lora : min(r, p)
///   hadamard_w0      : min(p, r * rank(W0))
///   smoa             : min(p, sum_k min(rows_k, cols_k, |I_k| * r_k))
/// `partition` is required for smoa; `w0_rank` for hadamard_w0.
int theoretical_bound(AdapterKind kind, const RunConfig& cfg, const EnergyPartition* partition = nullptr,
                      int w0_rank = -1);

struct SweepSpec {
    std::vector<AdapterKind> methods;
    int d = 0;
    std::vector<int> r_values;
    std::vector<int> K_values;
    int n_seeds = 0;
    std::uint64_t base_seed = 0;
    RankMode mode = RankMode::budget;
    bool budget_match = true;
    double tol_factor = kDefaultRankTolerance;
    double factor_std = 1.0;
    SpectrumShape spectrum = SpectrumShape::decaying;
};

/// Strict JSON parse of a sweep description. Keys: methods, d, r_values,
/// K_values, n_seeds (required); seed, mode, budget_match,
/// rank_tolerance_factor, factor_std, spectrum (optional).
SweepSpec parse_sweep_spec(const nlohmann::json& doc);
nlohmann::json to_json(const SweepSpec& spec);

struct RankReport {
    std::vector<io::ReportRow> rows;       // ordered by (method, d, r, K, seed)
    std::vector<std::string> skipped;      // one reason per skipped cell
    double tol_factor = kDefaultRankTolerance;
    std::uint64_t config_hash = 0;

    /// Rows violating numerical_rank <= rank_upper_bound.
    std::vector<io::ReportRow> violations() const;
    /// Sidecar metadata (protocol notes, skipped cells, per-row bounds).
    nlohmann::json metadata() const;
};

/// Rank sweep. For every (method, r, K, seed): W0 from the seeded
/// synthetic generator, adapter built from (r, K) (or its budget-matched
/// baseline config), every factor filled with N(0, factor_std^2) draws, then
/// rank, bound and parameter count recorded. Invalid cells are skipped with
/// a reason. The Frobenius column holds ||delta||_F.
RankReport rank_sweep(const SweepSpec& spec);

/// Median of `values` (mean of the two middle elements for even sizes).
double median(std::vector<double> values);

}  // namespace smoa
