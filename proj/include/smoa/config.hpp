#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace smoa {

/// How the global rank `r` is spread over the K subspaces.
enum class RankMode {
    budget,    // r is the total budget; subspace k gets floor(r/K) (+1 for the first r mod K)
    flexible,  // every subspace gets rank r
};

std::string_view to_string(RankMode mode) noexcept;
RankMode parse_rank_mode(std::string_view text);

struct RunConfig {
    int d_out = 0;
    int d_in = 0;
    int K = 1;
    RankMode mode = RankMode::budget;
    int r = 1;
    double alpha = 0.0;  // filled with r when absent
    std::uint64_t seed = 0;
    double init_std = 0.02;
    double rank_tolerance_factor = 1e-10;
    double energy_exponent = 1.0;

    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Config with every optional field at its default (alpha = r).
RunConfig make_config(int d_out, int d_in, int K, int r, std::uint64_t seed,
                      RankMode mode = RankMode::budget);

/// Human-readable list of violated invariants, empty if the config is valid.
std::vector<std::string> violations(const RunConfig& cfg);

/// Throws ErrorKind::validation listing every violation.
void validate(const RunConfig& cfg);

/// Strict parse: unknown keys and wrong types are rejected, optional fields
/// are defaulted, and the result is validated.
RunConfig parse_config(const nlohmann::json& doc);
RunConfig read_config(const std::filesystem::path& path);

nlohmann::json to_json(const RunConfig& cfg);
void write_config(const RunConfig& cfg, const std::filesystem::path& path);

namespace detail {
/// Rejects keys of `doc` outside `allowed`; throws ErrorKind::validation.
void reject_unknown_keys(const nlohmann::json& doc, std::initializer_list<std::string_view> allowed,
                         std::string_view context);
}  // namespace detail

}  // namespace smoa
