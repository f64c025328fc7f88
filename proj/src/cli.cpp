#include "smoa/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>
#include <json.hpp>

#include "smoa/adapters.hpp"
#include "smoa/config.hpp"
#include "smoa/error.hpp"
#include "smoa/io.hpp"
#include "smoa/rank.hpp"
#include "smoa/spectral.hpp"
#include "smoa/training.hpp"

namespace smoa::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int exit_code_for(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::validation:
    case ErrorKind::config:
    case ErrorKind::dimension:
        return kValidationFailure;
    case ErrorKind::numerical:
        return kNumericalFailure;
    case ErrorKind::io:
    case ErrorKind::format:
    case ErrorKind::truncation:
    case ErrorKind::data:
        return kIoFailure;
    }
    return kValidationFailure;
}

/// 1-based, compact: {}, {3}, {2,3}, {4..9}.
std::string format_index_set(const std::vector<std::size_t>& set) {
    if (set.empty()) return "{}";
    if (set.size() == 1) return fmt::format("{{{}}}", set.front() + 1);
    if (set.size() == 2) return fmt::format("{{{},{}}}", set[0] + 1, set[1] + 1);
    return fmt::format("{{{}..{}}}", set.front() + 1, set.back() + 1);
}

json read_json(const fs::path& path) {
    try {
        return json::parse(io::read_text(path));
    } catch (const json::parse_error& e) {
        fail(ErrorKind::validation, fmt::format("{}: invalid JSON: {}", path.string(), e.what()));
    }
}

// -- analyze -------------------------------------------------------------------

struct AnalyzeArgs {
    std::string input;
    int K = 1;
    std::string json_out;
};

int cmd_analyze(const AnalyzeArgs& args, std::ostream& out, std::ostream& err) {
    std::string stage = "read";
    try {
        const Matrix w0 = io::read_matrix(args.input);
        stage = "decompose";
        const auto dec = decompose(w0);
        const Vector energy = cumulative_energy(dec.sigma);
        stage = "partition";
        const auto part = partition(energy, args.K);

        fmt::print(out, "matrix: {}x{} (p = {})\n", w0.rows(), w0.cols(), dec.sigma.size());
        fmt::print(out, "spectrum:\n");
        fmt::print(out, "  {:>5}  {:>14}  {:>10}\n", "i", "sigma", "E(i)");
        for (Eigen::Index i = 0; i < dec.sigma.size(); ++i) {
            fmt::print(out, "  {:>5}  {:>14.8g}  {:>10.6f}\n", i + 1, dec.sigma(i), energy(i));
        }
        fmt::print(out, "partition (K = {}):\n", part.K);
        for (int k = 0; k < part.K; ++k) {
            const auto kk = static_cast<std::size_t>(k);
            fmt::print(out, "  I_{}={} (share {:.3f})\n", k + 1, format_index_set(part.index_sets[kk]),
                       part.shares[kk]);
        }
        for (const auto& d : part.diagnostics) fmt::print(out, "diagnostic: {}\n", d);

        if (!args.json_out.empty()) {
            stage = "write";
            json sets = json::array();
            for (const auto& set : part.index_sets) {
                json one = json::array();
                for (auto i : set) one.push_back(i + 1);
                sets.push_back(one);
            }
            json empties = json::array();
            for (int k : part.empty_subspaces()) empties.push_back(k + 1);
            const json doc{{"rows", w0.rows()},
                           {"cols", w0.cols()},
                           {"K", part.K},
                           {"sigma", std::vector<double>(dec.sigma.data(), dec.sigma.data() + dec.sigma.size())},
                           {"energy", std::vector<double>(energy.data(), energy.data() + energy.size())},
                           {"index_sets", sets},
                           {"shares", part.shares},
                           {"empty_subspaces", empties},
                           {"diagnostics", part.diagnostics}};
            io::write_text(doc.dump(2) + "\n", args.json_out);
            fmt::print(out, "wrote {}\n", args.json_out);
        }
        return kSuccess;
    } catch (const Error& e) {
        fmt::print(err, "smoa analyze: {} failed: {}: {}\n", stage, to_string(e.kind()), e.what());
        return exit_code_for(e.kind());
    }
}

// -- rank-bench ----------------------------------------------------------------

struct RankBenchArgs {
    std::string config;
    std::string out;
};

int cmd_rank_bench(const RankBenchArgs& args, std::ostream& out, std::ostream& err) {
    std::string stage = "config";
    try {
        const SweepSpec spec = parse_sweep_spec(read_json(args.config));

        // A method whose every (r, K) cell is invalid is a configuration error,
        // not a set of skipped rows.
        for (auto method : spec.methods) {
            std::vector<std::string> first;
            bool any_valid = false;
            for (int r : spec.r_values) {
                for (int K : spec.K_values) {
                    const auto v = violations(make_config(spec.d, spec.d, K, r, 0, spec.mode));
                    if (v.empty()) any_valid = true;
                    else if (first.empty()) first = v;
                }
            }
            if (!any_valid && !first.empty()) {
                fail(ErrorKind::validation, fmt::format("{}: {}", to_string(method), fmt::join(first, "; ")));
            }
            if (spec.r_values.empty() || spec.K_values.empty()) {
                fail(ErrorKind::validation, "r_values and K_values must be non-empty");
            }
        }

        stage = "sweep";
        const RankReport report = rank_sweep(spec);
        for (const auto& s : report.skipped) fmt::print(err, "skipped: {}\n", s);

        stage = "write";
        io::write_report(report.rows, args.out);
        fs::path sidecar = fs::path(args.out).replace_extension(".meta.json");
        if (fs::exists(sidecar) && fs::exists(args.config) && fs::equivalent(sidecar, args.config)) {
            fail(ErrorKind::io, "sidecar " + sidecar.string() + " would overwrite the config");
        }
        json meta = report.metadata();
        meta["config"] = to_json(spec);
        io::write_text(meta.dump(2) + "\n", sidecar);

        std::map<std::tuple<std::string, int, int>, std::vector<double>> cells;
        std::map<std::tuple<std::string, int, int>, std::int64_t> counts;
        for (const auto& row : report.rows) {
            cells[{row.method, row.r, row.K}].push_back(row.numerical_rank);
            counts[{row.method, row.r, row.K}] = row.param_count;
        }
        fmt::print(out, "{:<12} {:>5} {:>4} {:>8} {:>12} {:>6}\n", "method", "r", "K", "params", "median_rank",
                   "seeds");
        for (const auto& [key, ranks] : cells) {
            const auto& [method, r, K] = key;
            fmt::print(out, "{:<12} {:>5} {:>4} {:>8} {:>12} {:>6}\n", method, r, K, counts[key], median(ranks),
                       ranks.size());
        }
        fmt::print(out, "rows: {}  skipped cells: {}\n", report.rows.size(), report.skipped.size());
        fmt::print(out, "wrote {} and {}\n", args.out, sidecar.string());

        const auto bad = report.violations();
        if (!bad.empty()) {
            for (const auto& row : bad) {
                fmt::print(err, "smoa rank-bench: bound violation: {} r={} K={} seed={}: rank {} > bound {}\n",
                           row.method, row.r, row.K, row.seed, row.numerical_rank, row.rank_upper_bound);
            }
            return kNumericalFailure;
        }
        return kSuccess;
    } catch (const Error& e) {
        fmt::print(err, "smoa rank-bench: {} failed: {}: {}\n", stage, to_string(e.kind()), e.what());
        return exit_code_for(e.kind());
    }
}

// -- train ---------------------------------------------------------------------

struct TrainArgs {
    std::string config;
    std::string method;
    std::string out_prefix;
    int seeds = 1;
};

struct TrainJob {
    TaskSpec task;
    RunConfig adapter;
    OptimizerSettings optimizer;
    int steps = 2000;
    bool budget_match = true;
};

TrainJob parse_train_config(const json& doc) {
    detail::reject_unknown_keys(doc, {"task", "adapter", "optimizer", "steps", "budget_match"}, "train config");
    TrainJob job;
    try {
        const auto& t = doc.at("task");
        detail::reject_unknown_keys(t, {"d", "target_rank", "n_samples", "noise_std", "seed"}, "train config task");
        job.task.d = t.at("d").get<int>();
        job.task.target_rank = t.at("target_rank").get<int>();
        job.task.n_samples = t.at("n_samples").get<int>();
        job.task.noise_std = t.value("noise_std", 0.0);
        job.task.seed = t.value("seed", std::uint64_t{0});

        json a = doc.at("adapter");
        if (!a.is_object()) fail(ErrorKind::validation, "train config: \"adapter\" must be an object");
        if (!a.contains("d_out")) a["d_out"] = job.task.d;
        if (!a.contains("d_in")) a["d_in"] = job.task.d;
        if (!a.contains("seed")) a["seed"] = job.task.seed;
        job.adapter = parse_config(a);

        if (doc.contains("optimizer")) {
            const auto& o = doc.at("optimizer");
            detail::reject_unknown_keys(o, {"learning_rate", "beta1", "beta2", "epsilon", "weight_decay"},
                                        "train config optimizer");
            job.optimizer.learning_rate = o.value("learning_rate", job.optimizer.learning_rate);
            job.optimizer.beta1 = o.value("beta1", job.optimizer.beta1);
            job.optimizer.beta2 = o.value("beta2", job.optimizer.beta2);
            job.optimizer.epsilon = o.value("epsilon", job.optimizer.epsilon);
            job.optimizer.weight_decay = o.value("weight_decay", job.optimizer.weight_decay);
        }
        job.steps = doc.value("steps", job.steps);
        job.budget_match = doc.value("budget_match", job.budget_match);
    } catch (const json::exception& e) {
        fail(ErrorKind::validation, fmt::format("train config: {}", e.what()));
    }
    if (job.steps < 1) fail(ErrorKind::validation, "train config: steps must be ≥ 1");
    if (!(job.optimizer.learning_rate > 0.0)) fail(ErrorKind::validation, "train config: learning_rate must be > 0");
    if (job.adapter.d_out != job.task.d || job.adapter.d_in != job.task.d) {
        fail(ErrorKind::validation, "train config: adapter dimensions must equal task.d");
    }
    return job;
}

int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err) {
    std::string stage = "config";
    try {
        if (args.seeds < 1) fail(ErrorKind::validation, "--seeds must be ≥ 1");
        const auto kind = parse_adapter_kind(args.method);
        const TrainJob job = parse_train_config(read_json(args.config));
        RunConfig cfg = job.adapter;
        if (job.budget_match) {
            const auto matched = budget_matched_config(kind, job.adapter);
            if (!matched) {
                fail(ErrorKind::validation,
                     fmt::format("{} has no parameter count matching smoa at r={}, K={} (K must divide r)",
                                 args.method, job.adapter.r, job.adapter.K));
            }
            cfg = *matched;
        }

        const fs::path prefix(args.out_prefix);
        std::vector<io::ReportRow> rows;
        std::vector<double> finals;
        for (int s = 0; s < args.seeds; ++s) {
            TaskSpec task_spec = job.task;
            task_spec.seed = job.task.seed + static_cast<std::uint64_t>(s);
            RunConfig run_cfg = cfg;
            run_cfg.seed = cfg.seed + static_cast<std::uint64_t>(s);

            stage = "task";
            const LinearTask task = make_task(task_spec);
            Adapter adapter = build_adapter(kind, run_cfg, task.w0);
            stage = "train";
            TrainState state(job.optimizer);
            const auto losses = train(adapter, task, job.steps, state);

            stage = "write";
            const std::string stem = args.seeds == 1 ? prefix.filename().string()
                                                     : fmt::format("{}.seed{}", prefix.filename().string(),
                                                                   task_spec.seed);
            const fs::path base = prefix.parent_path() / stem;
            const fs::path loss_path = base.string() + ".loss.csv";
            io::write_text(io::format_loss_trace(losses), loss_path);
            save_adapter(adapter, base.string() + ".adapter");

            const Matrix dw = delta(adapter);
            io::ReportRow row;
            row.method = args.method;
            row.d = task_spec.d;
            row.r = run_cfg.r;
            row.K = job.adapter.K;
            row.seed = task_spec.seed;
            row.param_count = adapter.param_count();
            row.numerical_rank = numerical_rank(dw, run_cfg.rank_tolerance_factor);
            row.frobenius_error = (dw - task.target_delta).norm();
            rows.push_back(row);
            finals.push_back(losses.back());

            fmt::print(out, "seed {}: params {}  initial loss {}  final loss {}  rank(delta) {}\n", task_spec.seed,
                       row.param_count, io::format_real(losses.front()), io::format_real(losses.back()),
                       row.numerical_rank);
            fmt::print(out, "wrote {}\n", loss_path.string());
        }
        stage = "write";
        const fs::path report_path = prefix.string() + ".report.csv";
        io::write_report(rows, report_path);
        fmt::print(out, "median final loss ({} seed{}): {}\n", finals.size(), finals.size() == 1 ? "" : "s",
                   io::format_real(median(finals)));
        fmt::print(out, "wrote {}\n", report_path.string());
        return kSuccess;
    } catch (const Error& e) {
        fmt::print(err, "smoa train: {} failed: {}: {}\n", stage, to_string(e.kind()), e.what());
        return exit_code_for(e.kind());
    }
}

// -- gradcheck -----------------------------------------------------------------

struct GradCheckArgs {
    int d = 8;
    int K = 2;
    int r = 4;
    std::string method = "smoa";
    std::uint64_t seed = 0;
    std::string mode = "budget";
    double h = 1e-5;
    bool corrupt = false;
    bool zero_residual = false;
};

int cmd_gradcheck(const GradCheckArgs& args, std::ostream& out, std::ostream& err) {
    std::string stage = "config";
    try {
        const auto kind = parse_adapter_kind(args.method);
        const RunConfig cfg = make_config(args.d, args.d, args.K, args.r, args.seed, parse_rank_mode(args.mode));
        validate(cfg);

        stage = "setup";
        LinearTask task = make_task({args.d, std::max(1, args.d / 2), 2 * args.d, 0.1, args.seed});
        Adapter adapter = build_adapter(kind, cfg, task.w0);
        Rng rng(args.seed, {fnv1a("gradcheck.factors")});
        adapter.randomize_factors(rng, 0.5);
        if (args.zero_residual) task.targets = forward(adapter, task.w0, task.inputs);

        stage = "gradcheck";
        GradCheckOptions opts;
        opts.h = args.h;
        opts.seed = args.seed;
        opts.corrupt = args.corrupt;
        const auto report = grad_check(adapter, task, opts);
        fmt::print(out, "method {}  d={} K={} r={} mode={}  params {}\n", args.method, args.d, args.K, args.r,
                   args.mode, adapter.param_count());
        fmt::print(out, "entries checked: {} of {}\n", report.entries_checked, report.total_entries);
        fmt::print(out, "max relative error: {:.3e}\n", report.max_rel_error);
        if (!report.passed) {
            const auto& w = report.worst;
            fmt::print(err,
                       "smoa gradcheck: gradcheck failed: max relative error {:.3e} > {:.0e} at {}_{}[{}, {}] "
                       "(analytic {}, numeric {})\n",
                       report.max_rel_error, opts.tolerance, w.tensor, w.subspace + 1, w.row, w.col,
                       io::format_real(w.analytic), io::format_real(w.numeric));
            return kNumericalFailure;
        }
        return kSuccess;
    } catch (const Error& e) {
        fmt::print(err, "smoa gradcheck: {} failed: {}: {}\n", stage, to_string(e.kind()), e.what());
        return exit_code_for(e.kind());
    }
}

}  // namespace

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Structured modulation adapter toolkit", "smoa"};
    app.require_subcommand(1);

    AnalyzeArgs analyze;
    auto* a = app.add_subcommand("analyze", "Spectrum, cumulative energy and K-way energy partition of a matrix");
    a->add_option("--input", analyze.input, "Matrix file (.csv or SMOA binary)")->required();
    a->add_option("--k", analyze.K, "Number of subspaces")->required();
    a->add_option("--json", analyze.json_out, "Write the partition as JSON");

    RankBenchArgs bench;
    auto* b = app.add_subcommand("rank-bench", "Rank sweep across adapter kinds, r and K");
    b->add_option("--config", bench.config, "Sweep JSON")->required();
    b->add_option("--out", bench.out, "Report CSV")->required();

    TrainArgs trainer;
    auto* t = app.add_subcommand("train", "Train an adapter on a planted-update task");
    t->add_option("--config", trainer.config, "Training JSON")->required();
    t->add_option("--method", trainer.method, "smoa, lora, block_lora or hadamard_w0")->required();
    t->add_option("--out-prefix", trainer.out_prefix, "Output path prefix")->required();
    t->add_option("--seeds", trainer.seeds, "Number of consecutive seeds to run");

    GradCheckArgs gc;
    auto* g = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients");
    g->add_option("--d", gc.d, "Weight dimension")->required();
    g->add_option("--k", gc.K, "Number of subspaces")->required();
    g->add_option("--r", gc.r, "Rank")->required();
    g->add_option("--method", gc.method, "Adapter kind")->required();
    g->add_option("--seed", gc.seed, "Seed")->required();
    g->add_option("--mode", gc.mode, "budget or flexible");
    g->add_option("--step", gc.h, "Finite-difference step h");
    g->add_flag("--inject-corruption", gc.corrupt)->group("");
    g->add_flag("--zero-residual", gc.zero_residual)->group("");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kSuccess : kValidationFailure;
    }

    try {
        if (*a) return cmd_analyze(analyze, out, err);
        if (*b) return cmd_rank_bench(bench, out, err);
        if (*t) return cmd_train(trainer, out, err);
        if (*g) return cmd_gradcheck(gc, out, err);
    } catch (const std::exception& e) {
        fmt::print(err, "smoa: unexpected failure: {}\n", e.what());
        return kNumericalFailure;
    }
    return kValidationFailure;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    std::vector<std::string> storage;
    storage.reserve(args.size() + 1);
    storage.emplace_back("smoa");
    storage.insert(storage.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& s : storage) argv.push_back(s.data());
    return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace smoa::cli
