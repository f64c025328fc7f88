#include "smoa/adapters.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include "smoa/error.hpp"
#include "smoa/io.hpp"

namespace smoa {

using nlohmann::json;

std::string_view to_string(AdapterKind kind) noexcept {
    switch (kind) {
    case AdapterKind::smoa: return "smoa";
    case AdapterKind::lora: return "lora";
    case AdapterKind::block_lora: return "block_lora";
    case AdapterKind::hadamard_w0: return "hadamard_w0";
    }
    return "unknown";
}

AdapterKind parse_adapter_kind(std::string_view name) {
    for (auto kind : kAllKinds) {
        if (name == to_string(kind)) return kind;
    }
    fail(ErrorKind::validation,
         fmt::format("unknown method \"{}\" (expected smoa, lora, block_lora or hadamard_w0)", name));
}

std::vector<IndexRange> BlockLayout::split(int n, int K) {
    std::vector<IndexRange> out;
    out.reserve(static_cast<std::size_t>(K));
    const int base = n / K;
    const int extra = n % K;
    std::size_t at = 0;
    for (int k = 0; k < K; ++k) {
        const auto len = static_cast<std::size_t>(base + (k < extra ? 1 : 0));
        out.push_back({at, at + len});
        at += len;
    }
    return out;
}

BlockLayout BlockLayout::even(int d_out, int d_in, int K) {
    if (K < 1 || K > std::min(d_out, d_in)) {
        fail(ErrorKind::config, fmt::format("block layout: K = {} must lie in [1, min(d_out, d_in)]", K));
    }
    return BlockLayout{K, split(d_out, K), split(d_in, K)};
}

std::vector<int> subspace_ranks(RankMode mode, int r, int K) {
    std::vector<int> ranks(static_cast<std::size_t>(K), r);
    if (mode == RankMode::budget) {
        for (int k = 0; k < K; ++k) ranks[static_cast<std::size_t>(k)] = r / K + (k < r % K ? 1 : 0);
    }
    return ranks;
}

Adapter::Adapter(AdapterKind kind, int d_out, int d_in, std::vector<AdapterBlock> blocks,
                 std::optional<EnergyPartition> partition)
    : kind_(kind), d_out_(d_out), d_in_(d_in), blocks_(std::move(blocks)), partition_(std::move(partition)) {
    for (const auto& blk : blocks_) {
        const auto rows = static_cast<Eigen::Index>(blk.rows.size());
        const auto cols = static_cast<Eigen::Index>(blk.cols.size());
        if (blk.rows.end > static_cast<std::size_t>(d_out) || blk.cols.end > static_cast<std::size_t>(d_in)) {
            fail(ErrorKind::dimension, "adapter block lies outside the weight");
        }
        require_shape(blk.A, blk.rank, cols, "adapter factor A");
        require_shape(blk.B, rows, blk.rank, "adapter factor B");
        if (blk.mask) require_shape(*blk.mask, rows, cols, "adapter mask");
    }
}

std::int64_t Adapter::param_count() const noexcept {
    std::int64_t total = 0;
    for (const auto& blk : blocks_) {
        total += static_cast<std::int64_t>(blk.rank) *
                 static_cast<std::int64_t>(blk.rows.size() + blk.cols.size());
    }
    return total;
}

void Adapter::randomize_factors(Rng& rng, double stddev) {
    for (auto& blk : blocks_) {
        blk.A = rng.gaussian(blk.A.rows(), blk.A.cols(), stddev);
        blk.B = rng.gaussian(blk.B.rows(), blk.B.cols(), stddev);
    }
}

namespace {

AdapterBlock make_block(IndexRange rows, IndexRange cols, int rank, double alpha, double init_std, Rng& rng) {
    AdapterBlock blk;
    blk.rows = rows;
    blk.cols = cols;
    blk.rank = rank;
    blk.scale = alpha / rank;
    blk.A = rng.gaussian(rank, static_cast<Eigen::Index>(cols.size()), init_std);
    blk.B = Matrix::Zero(static_cast<Eigen::Index>(rows.size()), rank);
    return blk;
}

void check_weight(const RunConfig& cfg, const Matrix& w0) {
    validate(cfg);
    require_shape(w0, cfg.d_out, cfg.d_in, "W0");
    require_finite(w0, "W0");
}

std::vector<AdapterBlock> diagonal_blocks(const RunConfig& cfg, Rng& rng) {
    const auto layout = BlockLayout::even(cfg.d_out, cfg.d_in, cfg.K);
    const auto ranks = subspace_ranks(cfg.mode, cfg.r, cfg.K);
    std::vector<AdapterBlock> blocks;
    for (int k = 0; k < cfg.K; ++k) {
        const auto kk = static_cast<std::size_t>(k);
        blocks.push_back(make_block(layout.rows[kk], layout.cols[kk], ranks[kk], cfg.alpha, cfg.init_std, rng));
    }
    return blocks;
}

}  // namespace

Adapter build_smoa(const RunConfig& cfg, const Matrix& w0) {
    check_weight(cfg, w0);
    return build_smoa(cfg, w0, decompose(w0));
}

Adapter build_smoa(const RunConfig& cfg, const Matrix& w0, const SpectralDecomposition& dec) {
    check_weight(cfg, w0);
    auto part = partition_spectrum(dec.sigma, cfg.K, cfg.energy_exponent);
    Rng rng(cfg.seed, {fnv1a("smoa.init")});
    auto blocks = diagonal_blocks(cfg, rng);
    for (int k = 0; k < cfg.K; ++k) {
        auto& blk = blocks[static_cast<std::size_t>(k)];
        blk.mask = modulation_block(dec, part, k, blk.rows, blk.cols);
    }
    return Adapter(AdapterKind::smoa, cfg.d_out, cfg.d_in, std::move(blocks), std::move(part));
}

Adapter build_baseline(AdapterKind kind, const RunConfig& cfg, const Matrix& w0) {
    check_weight(cfg, w0);
    Rng rng(cfg.seed, {fnv1a("baseline.init"), static_cast<std::uint64_t>(kind)});
    const IndexRange all_rows{0, static_cast<std::size_t>(cfg.d_out)};
    const IndexRange all_cols{0, static_cast<std::size_t>(cfg.d_in)};
    switch (kind) {
    case AdapterKind::lora: {
        std::vector<AdapterBlock> blocks;
        blocks.push_back(make_block(all_rows, all_cols, cfg.r, cfg.alpha, cfg.init_std, rng));
        return Adapter(kind, cfg.d_out, cfg.d_in, std::move(blocks));
    }
    case AdapterKind::hadamard_w0: {
        std::vector<AdapterBlock> blocks;
        blocks.push_back(make_block(all_rows, all_cols, cfg.r, cfg.alpha, cfg.init_std, rng));
        blocks.front().mask = w0;
        return Adapter(kind, cfg.d_out, cfg.d_in, std::move(blocks));
    }
    case AdapterKind::block_lora:
        return Adapter(kind, cfg.d_out, cfg.d_in, diagonal_blocks(cfg, rng));
    case AdapterKind::smoa:
        break;
    }
    fail(ErrorKind::validation, "build_baseline: smoa is not a baseline kind");
}

Adapter build_adapter(AdapterKind kind, const RunConfig& cfg, const Matrix& w0) {
    return kind == AdapterKind::smoa ? build_smoa(cfg, w0) : build_baseline(kind, cfg, w0);
}

namespace {
Matrix block_update(const AdapterBlock& blk) {
    Matrix update = blk.scale * (blk.B * blk.A);
    if (blk.mask) update = update.cwiseProduct(*blk.mask);
    return update;
}
}  // namespace

Matrix delta(const Adapter& adapter) {
    Matrix out = Matrix::Zero(adapter.d_out(), adapter.d_in());
    for (int k = 0; k < adapter.num_blocks(); ++k) {
        const auto& blk = adapter.block(k);
        out.block(static_cast<Eigen::Index>(blk.rows.begin), static_cast<Eigen::Index>(blk.cols.begin),
                  static_cast<Eigen::Index>(blk.rows.size()), static_cast<Eigen::Index>(blk.cols.size())) +=
            block_update(blk);
    }
    return out;
}

Matrix merge(const Adapter& adapter, const Matrix& w0) {
    require_shape(w0, adapter.d_out(), adapter.d_in(), "merge: W0");
    return w0 + delta(adapter);
}

std::int64_t param_count(AdapterKind kind, const RunConfig& cfg) {
    validate(cfg);
    const auto dims = static_cast<std::int64_t>(cfg.d_out) + cfg.d_in;
    switch (kind) {
    case AdapterKind::lora:
    case AdapterKind::hadamard_w0:
        return static_cast<std::int64_t>(cfg.r) * dims;
    case AdapterKind::smoa:
    case AdapterKind::block_lora: {
        const auto layout = BlockLayout::even(cfg.d_out, cfg.d_in, cfg.K);
        const auto ranks = subspace_ranks(cfg.mode, cfg.r, cfg.K);
        std::int64_t total = 0;
        for (std::size_t k = 0; k < ranks.size(); ++k) {
            total += static_cast<std::int64_t>(ranks[k]) *
                     static_cast<std::int64_t>(layout.rows[k].size() + layout.cols[k].size());
        }
        return total;
    }
    }
    return 0;
}

std::optional<RunConfig> budget_matched_config(AdapterKind kind, const RunConfig& smoa_cfg) {
    RunConfig cfg = smoa_cfg;
    if (kind == AdapterKind::smoa || kind == AdapterKind::block_lora) {
        return cfg;
    }
    if (smoa_cfg.mode == RankMode::budget) {
        if (smoa_cfg.r % smoa_cfg.K != 0) return std::nullopt;
        // alpha is kept, so the scale alpha/r equals SMoA's alpha/r_k.
        cfg.r = smoa_cfg.r / smoa_cfg.K;
    }
    cfg.K = 1;
    cfg.mode = RankMode::budget;
    if (param_count(kind, cfg) != param_count(AdapterKind::smoa, smoa_cfg)) return std::nullopt;
    return cfg;
}

// -- serialization ---------------------------------------------------------

namespace {
std::string tensor_file(const std::filesystem::path& prefix, std::string_view role, int k) {
    return fmt::format("{}.{}{}.smoa", prefix.filename().string(), role, k);
}

json range_json(IndexRange r) { return json::array({r.begin, r.end}); }

IndexRange range_from(const json& j) { return {j.at(0).get<std::size_t>(), j.at(1).get<std::size_t>()}; }
}  // namespace

std::vector<std::filesystem::path> save_adapter(const Adapter& adapter, const std::filesystem::path& prefix) {
    const auto dir = prefix.parent_path();
    std::vector<std::filesystem::path> written;
    json tensors = json::array();
    json blocks = json::array();
    auto emit = [&](const Matrix& m, std::string_view role, int k, bool trainable) {
        const auto name = tensor_file(prefix, role, k);
        io::write_matrix(m, dir / name);
        written.push_back(dir / name);
        tensors.push_back({{"role", role},
                           {"subspace", k},
                           {"shape", {m.rows(), m.cols()}},
                           {"file", name},
                           {"trainable", trainable}});
    };
    for (int k = 0; k < adapter.num_blocks(); ++k) {
        const auto& blk = adapter.block(k);
        blocks.push_back({{"subspace", k},
                          {"rows", range_json(blk.rows)},
                          {"cols", range_json(blk.cols)},
                          {"rank", blk.rank},
                          {"scale", blk.scale},
                          {"masked", blk.mask.has_value()}});
        emit(blk.A, "A", k, true);
        emit(blk.B, "B", k, true);
        if (blk.mask) emit(*blk.mask, "mask", k, false);
    }
    json manifest{{"format", "smoa-adapter"},
                  {"version", 1},
                  {"kind", to_string(adapter.kind())},
                  {"d_out", adapter.d_out()},
                  {"d_in", adapter.d_in()},
                  {"blocks", blocks},
                  {"tensors", tensors}};
    if (const auto& part = adapter.partition()) {
        json sets = json::array();
        for (const auto& set : part->index_sets) sets.push_back(set);
        manifest["partition"] = {{"K", part->K}, {"index_sets", sets}, {"shares", part->shares}};
    }
    const auto manifest_path = dir / (prefix.filename().string() + ".manifest.json");
    io::write_text(manifest.dump(2) + "\n", manifest_path);
    written.insert(written.begin(), manifest_path);
    return written;
}

Adapter load_adapter(const std::filesystem::path& manifest_path) {
    json manifest;
    try {
        manifest = json::parse(io::read_text(manifest_path));
        if (manifest.at("format") != "smoa-adapter") {
            fail(ErrorKind::format, fmt::format("{}: not an adapter manifest", manifest_path.string()));
        }
        const auto dir = manifest_path.parent_path();
        const auto kind = parse_adapter_kind(manifest.at("kind").get<std::string>());
        std::vector<AdapterBlock> blocks;
        for (const auto& b : manifest.at("blocks")) {
            AdapterBlock blk;
            blk.rows = range_from(b.at("rows"));
            blk.cols = range_from(b.at("cols"));
            blk.rank = b.at("rank").get<int>();
            blk.scale = b.at("scale").get<double>();
            blocks.push_back(std::move(blk));
        }
        for (const auto& t : manifest.at("tensors")) {
            const auto k = t.at("subspace").get<std::size_t>();
            const auto role = t.at("role").get<std::string>();
            auto m = io::read_matrix(dir / t.at("file").get<std::string>());
            auto& blk = blocks.at(k);
            if (role == "A") blk.A = std::move(m);
            else if (role == "B") blk.B = std::move(m);
            else if (role == "mask") blk.mask = std::move(m);
            else fail(ErrorKind::format, fmt::format("{}: unknown tensor role \"{}\"", manifest_path.string(), role));
        }
        std::optional<EnergyPartition> part;
        if (manifest.contains("partition")) {
            const auto& p = manifest.at("partition");
            EnergyPartition ep;
            ep.K = p.at("K").get<int>();
            ep.index_sets = p.at("index_sets").get<std::vector<std::vector<std::size_t>>>();
            ep.shares = p.at("shares").get<std::vector<double>>();
            part = std::move(ep);
        }
        return Adapter(kind, manifest.at("d_out").get<int>(), manifest.at("d_in").get<int>(), std::move(blocks),
                       std::move(part));
    } catch (const json::exception& e) {
        fail(ErrorKind::format, fmt::format("{}: malformed manifest: {}", manifest_path.string(), e.what()));
    }
}

}  // namespace smoa
