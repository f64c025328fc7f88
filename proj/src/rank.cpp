#include "smoa/rank.hpp"

#include <algorithm>
#include <map>
#include <tuple>

#include <fmt/format.h>

#include "smoa/error.hpp"
#include "smoa/random.hpp"

namespace smoa {

using nlohmann::json;

int numerical_rank(const Matrix& m, double tol_factor) {
    if (m.size() == 0) return 0;
    require_finite(m, "numerical_rank");
    // BDCSVD in Eigen 3.4.0 misreports singular values of some block-structured inputs
    Eigen::JacobiSVD<Matrix> svd(m);
    if (svd.info() != Eigen::Success) {
        fail(ErrorKind::numerical, "numerical_rank: SVD did not converge");
    }
    const Vector& s = svd.singularValues();
    if (s.size() == 0 || s(0) == 0.0) return 0;
    const double tol = tol_factor * s(0) * static_cast<double>(std::max(m.rows(), m.cols()));
    return static_cast<int>((s.array() > tol).count());
}

int theoretical_bound(AdapterKind kind, const RunConfig& cfg, const EnergyPartition* partition, int w0_rank) {
    const int p = std::min(cfg.d_out, cfg.d_in);
    switch (kind) {
    case AdapterKind::lora:
        return std::min(cfg.r, p);
    case AdapterKind::hadamard_w0: {
        if (w0_rank < 0) fail(ErrorKind::validation, "theoretical_bound: hadamard_w0 needs rank(W0)");
        return static_cast<int>(std::min<std::int64_t>(p, static_cast<std::int64_t>(cfg.r) * w0_rank));
    }
    case AdapterKind::block_lora:
    case AdapterKind::smoa: {
        if (kind == AdapterKind::smoa && (partition == nullptr || partition->K != cfg.K)) {
            fail(ErrorKind::validation, "theoretical_bound: smoa needs the energy partition for the same K");
        }
        const auto layout = BlockLayout::even(cfg.d_out, cfg.d_in, cfg.K);
        const auto ranks = subspace_ranks(cfg.mode, cfg.r, cfg.K);
        std::int64_t total = 0;
        for (std::size_t k = 0; k < ranks.size(); ++k) {
            std::int64_t cap = std::min(layout.rows[k].size(), layout.cols[k].size());
            std::int64_t cell = ranks[k];
            if (kind == AdapterKind::smoa) cell *= static_cast<std::int64_t>(partition->index_sets[k].size());
            total += std::min(cap, cell);
        }
        return static_cast<int>(std::min<std::int64_t>(p, total));
    }
    }
    return p;
}

// -- sweep spec ----------------------------------------------------------------

namespace {

std::string_view to_string(SpectrumShape s) { return s == SpectrumShape::decaying ? "decaying" : "equal"; }

template <typename T>
std::vector<T> int_list(const json& doc, const char* key) {
    const auto& v = doc.at(key);
    if (!v.is_array()) fail(ErrorKind::validation, fmt::format("sweep config: \"{}\" must be an array", key));
    std::vector<T> out;
    for (const auto& e : v) {
        if (!e.is_number_integer() || e.get<long long>() < 1) {
            fail(ErrorKind::validation, fmt::format("sweep config: \"{}\" entries must be integers ≥ 1", key));
        }
        out.push_back(e.get<T>());
    }
    return out;
}

}  // namespace

SweepSpec parse_sweep_spec(const json& doc) {
    detail::reject_unknown_keys(doc,
                                {"methods", "d", "r_values", "K_values", "n_seeds", "seed", "mode", "budget_match",
                                 "rank_tolerance_factor", "factor_std", "spectrum"},
                                "sweep config");
    for (const char* key : {"methods", "d", "r_values", "K_values", "n_seeds"}) {
        if (!doc.contains(key)) fail(ErrorKind::validation, fmt::format("sweep config: missing \"{}\"", key));
    }
    SweepSpec spec;
    try {
        if (!doc.at("methods").is_array()) fail(ErrorKind::validation, "sweep config: \"methods\" must be an array");
        for (const auto& m : doc.at("methods")) spec.methods.push_back(parse_adapter_kind(m.get<std::string>()));
        spec.d = doc.at("d").get<int>();
        spec.r_values = int_list<int>(doc, "r_values");
        spec.K_values = int_list<int>(doc, "K_values");
        spec.n_seeds = doc.at("n_seeds").get<int>();
        if (doc.contains("seed")) spec.base_seed = doc.at("seed").get<std::uint64_t>();
        if (doc.contains("mode")) spec.mode = parse_rank_mode(doc.at("mode").get<std::string>());
        if (doc.contains("budget_match")) spec.budget_match = doc.at("budget_match").get<bool>();
        if (doc.contains("rank_tolerance_factor")) spec.tol_factor = doc.at("rank_tolerance_factor").get<double>();
        if (doc.contains("factor_std")) spec.factor_std = doc.at("factor_std").get<double>();
        if (doc.contains("spectrum")) {
            const auto s = doc.at("spectrum").get<std::string>();
            if (s == "decaying") spec.spectrum = SpectrumShape::decaying;
            else if (s == "equal") spec.spectrum = SpectrumShape::equal;
            else fail(ErrorKind::validation, "sweep config: spectrum must be \"decaying\" or \"equal\"");
        }
    } catch (const json::exception& e) {
        fail(ErrorKind::validation, fmt::format("sweep config: {}", e.what()));
    }
    if (spec.d < 1) fail(ErrorKind::validation, "sweep config: d must be ≥ 1");
    if (spec.n_seeds < 1) fail(ErrorKind::validation, "sweep config: n_seeds must be ≥ 1");
    if (!(spec.tol_factor > 0.0)) fail(ErrorKind::validation, "sweep config: rank_tolerance_factor must be > 0");
    if (!(spec.factor_std > 0.0)) fail(ErrorKind::validation, "sweep config: factor_std must be > 0");
    return spec;
}

json to_json(const SweepSpec& spec) {
    json methods = json::array();
    for (auto m : spec.methods) methods.push_back(to_string(m));
    return json{{"methods", methods},
                {"d", spec.d},
                {"r_values", spec.r_values},
                {"K_values", spec.K_values},
                {"n_seeds", spec.n_seeds},
                {"seed", spec.base_seed},
                {"mode", to_string(spec.mode)},
                {"budget_match", spec.budget_match},
                {"rank_tolerance_factor", spec.tol_factor},
                {"factor_std", spec.factor_std},
                {"spectrum", to_string(spec.spectrum)}};
}

// -- report --------------------------------------------------------------------

std::vector<io::ReportRow> RankReport::violations() const {
    std::vector<io::ReportRow> out;
    for (const auto& row : rows) {
        if (row.numerical_rank > row.rank_upper_bound) out.push_back(row);
    }
    return out;
}

json RankReport::metadata() const {
    json bounds = json::array();
    for (const auto& row : rows) {
        bounds.push_back({{"method", row.method}, {"r", row.r}, {"K", row.K}, {"seed", row.seed},
                          {"rank_upper_bound", row.rank_upper_bound}});
    }
    return json{{"tolerance_factor", tol_factor},
                {"config_hash", fmt::format("{:016x}", config_hash)},
                {"protocol",
                 "adapter factors A_k and B_k are filled with seeded Gaussian draws (not the zero-init "
                 "state) so ranks measure the achievable update; frobenius_error holds ||delta||_F"},
                {"skipped", skipped},
                {"bounds", bounds}};
}

// -- sweep ---------------------------------------------------------------------

RankReport rank_sweep(const SweepSpec& spec) {
    RankReport report;
    report.tol_factor = spec.tol_factor;
    report.config_hash = fnv1a(to_json(spec).dump());
    if (spec.methods.empty()) return report;

    struct SeedCache {
        Matrix w0;
        SpectralDecomposition dec;
        int w0_rank = 0;
    };
    std::vector<SeedCache> cache;
    cache.reserve(static_cast<std::size_t>(spec.n_seeds));
    for (int s = 0; s < spec.n_seeds; ++s) {
        const std::uint64_t seed = spec.base_seed + static_cast<std::uint64_t>(s);
        SeedCache c;
        c.w0 = synthetic_weight(spec.d, spec.d, seed, spec.spectrum);
        c.dec = decompose(c.w0);
        c.w0_rank = numerical_rank(c.w0, spec.tol_factor);
        cache.push_back(std::move(c));
    }

    using Key = std::tuple<std::string, int, int, int, std::uint64_t>;
    std::map<Key, io::ReportRow> ordered;
    for (auto method : spec.methods) {
        for (int r : spec.r_values) {
            for (int K : spec.K_values) {
                RunConfig cell = make_config(spec.d, spec.d, K, r, 0, spec.mode);
                cell.rank_tolerance_factor = spec.tol_factor;
                if (const auto v = violations(cell); !v.empty()) {
                    report.skipped.push_back(fmt::format("{} r={} K={}: {}", to_string(method), r, K, fmt::join(v, "; ")));
                    continue;
                }
                RunConfig cfg = cell;
                if (spec.budget_match) {
                    const auto matched = budget_matched_config(method, cell);
                    if (!matched) {
                        report.skipped.push_back(fmt::format("{} r={} K={}: no budget-matched configuration (K must divide r)",
                                                             to_string(method), r, K));
                        continue;
                    }
                    cfg = *matched;
                    const auto target = static_cast<double>(param_count(AdapterKind::smoa, cell));
                    const auto got = static_cast<double>(param_count(method, cfg));
                    if (std::abs(got - target) > 0.01 * target) {
                        report.skipped.push_back(
                            fmt::format("{} r={} K={}: parameter counts differ by more than 1%", to_string(method), r, K));
                        continue;
                    }
                }
                for (int s = 0; s < spec.n_seeds; ++s) {
                    const auto& c = cache[static_cast<std::size_t>(s)];
                    const std::uint64_t seed = spec.base_seed + static_cast<std::uint64_t>(s);
                    cfg.seed = seed;
                    Adapter adapter = method == AdapterKind::smoa ? build_smoa(cfg, c.w0, c.dec)
                                                                  : build_baseline(method, cfg, c.w0);
                    Rng rng(seed, {fnv1a("sweep.factors"), static_cast<std::uint64_t>(method),
                                   static_cast<std::uint64_t>(r), static_cast<std::uint64_t>(K)});
                    adapter.randomize_factors(rng, spec.factor_std);
                    const Matrix dw = delta(adapter);

                    io::ReportRow row;
                    row.method = std::string(to_string(method));
                    row.d = spec.d;
                    row.r = cfg.r;
                    row.K = K;
                    row.seed = seed;
                    row.param_count = adapter.param_count();
                    row.numerical_rank = numerical_rank(dw, spec.tol_factor);
                    row.rank_upper_bound = theoretical_bound(
                        method, cfg, adapter.partition() ? &*adapter.partition() : nullptr, c.w0_rank);
                    row.frobenius_error = dw.norm();
                    ordered[Key{row.method, row.d, row.r, row.K, row.seed}] = std::move(row);
                }
            }
        }
    }
    for (auto& [_, row] : ordered) report.rows.push_back(std::move(row));
    return report;
}

double median(std::vector<double> values) {
    if (values.empty()) fail(ErrorKind::validation, "median of an empty set");
    std::sort(values.begin(), values.end());
    const auto n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace smoa
