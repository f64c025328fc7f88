#include "smoa/config.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "smoa/error.hpp"
#include "smoa/io.hpp"

namespace smoa {

using nlohmann::json;

std::string_view to_string(RankMode mode) noexcept {
    return mode == RankMode::budget ? "budget" : "flexible";
}

RankMode parse_rank_mode(std::string_view text) {
    if (text == "budget") return RankMode::budget;
    if (text == "flexible") return RankMode::flexible;
    fail(ErrorKind::validation, fmt::format("mode must be \"budget\" or \"flexible\", got \"{}\"", text));
}

RunConfig make_config(int d_out, int d_in, int K, int r, std::uint64_t seed, RankMode mode) {
    RunConfig cfg;
    cfg.d_out = d_out;
    cfg.d_in = d_in;
    cfg.K = K;
    cfg.r = r;
    cfg.seed = seed;
    cfg.mode = mode;
    cfg.alpha = static_cast<double>(r);
    return cfg;
}

std::vector<std::string> violations(const RunConfig& cfg) {
    std::vector<std::string> out;
    if (cfg.d_out < 1) out.emplace_back("d_out must be ≥ 1");
    if (cfg.d_in < 1) out.emplace_back("d_in must be ≥ 1");
    if (cfg.K < 1) out.emplace_back("K must be ≥ 1");
    if (cfg.r < 1) out.emplace_back("r must be ≥ 1");
    if (cfg.K >= 1 && cfg.d_out >= 1 && cfg.d_in >= 1 && cfg.K > std::min(cfg.d_out, cfg.d_in)) {
        out.emplace_back("K must be ≤ min(d_out, d_in)");
    }
    if (cfg.mode == RankMode::budget && cfg.K >= 1 && cfg.r >= 1 && cfg.r < cfg.K) {
        out.emplace_back("r must be ≥ K");
    }
    if (!(cfg.alpha > 0.0)) out.emplace_back("alpha must be > 0");
    if (!(cfg.init_std > 0.0)) out.emplace_back("init_std must be > 0");
    if (!(cfg.rank_tolerance_factor > 0.0)) out.emplace_back("rank_tolerance_factor must be > 0");
    if (!(cfg.energy_exponent > 0.0)) out.emplace_back("energy_exponent must be > 0");
    return out;
}

void validate(const RunConfig& cfg) {
    const auto v = violations(cfg);
    if (!v.empty()) {
        fail(ErrorKind::validation, fmt::format("invalid config: {}", fmt::join(v, "; ")));
    }
}

namespace detail {
void reject_unknown_keys(const json& doc, std::initializer_list<std::string_view> allowed,
                         std::string_view context) {
    if (!doc.is_object()) {
        fail(ErrorKind::validation, fmt::format("{}: expected a JSON object", context));
    }
    for (const auto& [key, _] : doc.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            fail(ErrorKind::validation, fmt::format("{}: unknown field \"{}\"", context, key));
        }
    }
}
}  // namespace detail

namespace {

template <typename T>
T field(const json& doc, const char* key) {
    const auto& v = doc.at(key);
    if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) fail(ErrorKind::validation, fmt::format("config: \"{}\" must be a number", key));
    } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) fail(ErrorKind::validation, fmt::format("config: \"{}\" must be a string", key));
    } else {
        if (!v.is_number_integer()) {
            fail(ErrorKind::validation, fmt::format("config: \"{}\" must be an integer", key));
        }
        if constexpr (std::is_unsigned_v<T>) {
            if (v.is_number_integer() && !v.is_number_unsigned()) {
                fail(ErrorKind::validation, fmt::format("config: \"{}\" must be non-negative", key));
            }
        }
    }
    return v.get<T>();
}

template <typename T>
void required(const json& doc, const char* key, T& out) {
    if (!doc.contains(key)) {
        fail(ErrorKind::validation, fmt::format("config: missing required field \"{}\"", key));
    }
    out = field<T>(doc, key);
}

template <typename T>
void optional(const json& doc, const char* key, T& out) {
    if (doc.contains(key)) out = field<T>(doc, key);
}

}  // namespace

RunConfig parse_config(const json& doc) {
    detail::reject_unknown_keys(doc,
                                {"d_out", "d_in", "K", "mode", "r", "alpha", "seed", "init_std",
                                 "rank_tolerance_factor", "energy_exponent"},
                                "config");
    RunConfig cfg;
    required(doc, "d_out", cfg.d_out);
    required(doc, "d_in", cfg.d_in);
    required(doc, "K", cfg.K);
    required(doc, "r", cfg.r);
    required(doc, "seed", cfg.seed);
    std::string mode = "budget";
    optional(doc, "mode", mode);
    cfg.mode = parse_rank_mode(mode);
    cfg.alpha = static_cast<double>(cfg.r);
    optional(doc, "alpha", cfg.alpha);
    optional(doc, "init_std", cfg.init_std);
    optional(doc, "rank_tolerance_factor", cfg.rank_tolerance_factor);
    optional(doc, "energy_exponent", cfg.energy_exponent);
    validate(cfg);
    return cfg;
}

RunConfig read_config(const std::filesystem::path& path) {
    json doc;
    try {
        doc = json::parse(io::read_text(path));
    } catch (const json::parse_error& e) {
        fail(ErrorKind::format, fmt::format("{}: {}", path.string(), e.what()));
    }
    return parse_config(doc);
}

json to_json(const RunConfig& cfg) {
    return json{{"d_out", cfg.d_out},
                {"d_in", cfg.d_in},
                {"K", cfg.K},
                {"mode", std::string(to_string(cfg.mode))},
                {"r", cfg.r},
                {"alpha", cfg.alpha},
                {"seed", cfg.seed},
                {"init_std", cfg.init_std},
                {"rank_tolerance_factor", cfg.rank_tolerance_factor},
                {"energy_exponent", cfg.energy_exponent}};
}

void write_config(const RunConfig& cfg, const std::filesystem::path& path) {
    io::write_text(to_json(cfg).dump(2) + "\n", path);
}

}  // namespace smoa
