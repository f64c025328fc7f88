#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>

#include "smoa/adapters.hpp"
#include "smoa/config.hpp"
#include "smoa/error.hpp"
#include "smoa/io.hpp"
#include "smoa/random.hpp"
#include "smoa/rank.hpp"
#include "smoa/spectral.hpp"
#include "smoa/training.hpp"

namespace py = pybind11;
using namespace smoa;

namespace {

py::dict row_dict(const io::ReportRow& row) {
    py::dict d;
    d["method"] = row.method;
    d["d"] = row.d;
    d["r"] = row.r;
    d["K"] = row.K;
    d["seed"] = row.seed;
    d["param_count"] = row.param_count;
    d["numerical_rank"] = row.numerical_rank;
    d["rank_upper_bound"] = row.rank_upper_bound;
    d["frobenius_error"] = row.frobenius_error;
    return d;
}

}  // namespace

PYBIND11_MODULE(_smoa, m) {
    m.doc() = "Spectral-partition modulation adapters";

    PYBIND11_CONSTINIT static py::gil_safe_call_once_and_store<py::object> error;
    error.call_once_and_store_result([&] { return py::exception<Error>(m, "Error", PyExc_ValueError); });
    // message carries the error kind as a prefix, e.g. "config: ..."
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::set_error(error.get_stored(), (std::string(to_string(e.kind())) + ": " + e.what()).c_str());
        }
    });

    py::class_<SpectralDecomposition>(m, "SpectralDecomposition")
        .def_readonly("U", &SpectralDecomposition::U)
        .def_readonly("sigma", &SpectralDecomposition::sigma)
        .def_readonly("V", &SpectralDecomposition::V)
        .def("reconstruct", &SpectralDecomposition::reconstruct);
    m.def("decompose", &decompose, py::arg("w0"));
    m.def("cumulative_energy", &cumulative_energy, py::arg("sigma"), py::arg("exponent") = 1.0);

    py::class_<EnergyPartition>(m, "EnergyPartition")
        .def_readonly("K", &EnergyPartition::K)
        .def_readonly("index_sets", &EnergyPartition::index_sets)
        .def_readonly("shares", &EnergyPartition::shares)
        .def_readonly("diagnostics", &EnergyPartition::diagnostics)
        .def("empty_subspaces", &EnergyPartition::empty_subspaces);
    m.def("partition", &partition, py::arg("energy"), py::arg("K"));
    m.def("partition_spectrum", &partition_spectrum, py::arg("sigma"), py::arg("K"), py::arg("exponent") = 1.0);
    m.def("modulation_tensor", &modulation_tensor, py::arg("dec"), py::arg("partition"), py::arg("k"));

    py::class_<RunConfig>(m, "RunConfig")
        .def(py::init([](int d_out, int d_in, int K, int r, std::uint64_t seed, const std::string& mode) {
                 return make_config(d_out, d_in, K, r, seed, parse_rank_mode(mode));
             }),
             py::arg("d_out"), py::arg("d_in"), py::arg("K"), py::arg("r"), py::arg("seed") = 0,
             py::arg("mode") = "budget")
        .def_readwrite("d_out", &RunConfig::d_out)
        .def_readwrite("d_in", &RunConfig::d_in)
        .def_readwrite("K", &RunConfig::K)
        .def_readwrite("r", &RunConfig::r)
        .def_readwrite("alpha", &RunConfig::alpha)
        .def_readwrite("seed", &RunConfig::seed)
        .def_readwrite("init_std", &RunConfig::init_std)
        .def_readwrite("rank_tolerance_factor", &RunConfig::rank_tolerance_factor)
        .def_readwrite("energy_exponent", &RunConfig::energy_exponent)
        .def_property(
            "mode", [](const RunConfig& c) { return std::string(to_string(c.mode)); },
            [](RunConfig& c, const std::string& s) { c.mode = parse_rank_mode(s); })
        .def("violations", [](const RunConfig& c) { return violations(c); })
        .def("__eq__", [](const RunConfig& a, const RunConfig& b) { return a == b; });

    py::class_<Adapter>(m, "Adapter")
        .def_property_readonly("kind", [](const Adapter& a) { return std::string(to_string(a.kind())); })
        .def_property_readonly("d_out", &Adapter::d_out)
        .def_property_readonly("d_in", &Adapter::d_in)
        .def_property_readonly("num_blocks", &Adapter::num_blocks)
        .def("param_count", py::overload_cast<>(&Adapter::param_count, py::const_))
        .def("get_a", [](const Adapter& a, int k) { return a.a(k); })
        .def("get_b", [](const Adapter& a, int k) { return a.b(k); })
        .def("set_a",
             [](Adapter& a, int k, const Matrix& v) {
                 require_shape(v, a.a(k).rows(), a.a(k).cols(), "set_a");
                 a.a(k) = v;
             })
        .def("set_b",
             [](Adapter& a, int k, const Matrix& v) {
                 require_shape(v, a.b(k).rows(), a.b(k).cols(), "set_b");
                 a.b(k) = v;
             })
        .def("randomize_factors",
             [](Adapter& a, std::uint64_t seed, double stddev) {
                 Rng rng(seed, {fnv1a("python.factors")});
                 a.randomize_factors(rng, stddev);
             },
             py::arg("seed"), py::arg("stddev") = 1.0)
        .def("delta", [](const Adapter& a) { return delta(a); })
        .def("merge", [](const Adapter& a, const Matrix& w0) { return merge(a, w0); }, py::arg("w0"));

    m.def(
        "build_adapter",
        [](const std::string& kind, const RunConfig& cfg, const Matrix& w0) {
            return build_adapter(parse_adapter_kind(kind), cfg, w0);
        },
        py::arg("kind"), py::arg("cfg"), py::arg("w0"));
    m.def(
        "param_count", [](const std::string& kind, const RunConfig& cfg) { return param_count(parse_adapter_kind(kind), cfg); },
        py::arg("kind"), py::arg("cfg"));
    m.def(
        "budget_matched_config",
        [](const std::string& kind, const RunConfig& cfg) { return budget_matched_config(parse_adapter_kind(kind), cfg); },
        py::arg("kind"), py::arg("smoa_cfg"));

    py::class_<LinearTask>(m, "LinearTask")
        .def_readonly("w0", &LinearTask::w0)
        .def_readonly("target_delta", &LinearTask::target_delta)
        .def_readonly("inputs", &LinearTask::inputs)
        .def_readonly("targets", &LinearTask::targets);
    m.def(
        "make_task",
        [](int d, int target_rank, int n_samples, double noise_std, std::uint64_t seed) {
            return make_task({d, target_rank, n_samples, noise_std, seed});
        },
        py::arg("d"), py::arg("target_rank"), py::arg("n_samples"), py::arg("noise_std") = 0.0, py::arg("seed") = 0);
    m.def(
        "synthetic_weight",
        [](int d_out, int d_in, std::uint64_t seed, const std::string& shape) {
            if (shape != "decaying" && shape != "equal") fail(ErrorKind::validation, "shape must be decaying or equal");
            return synthetic_weight(d_out, d_in, seed, shape == "equal" ? SpectrumShape::equal : SpectrumShape::decaying);
        },
        py::arg("d_out"), py::arg("d_in"), py::arg("seed") = 0, py::arg("shape") = "decaying");

    m.def(
        "train",
        [](Adapter& adapter, const LinearTask& task, int steps, double learning_rate, double weight_decay) {
            OptimizerSettings s;
            s.learning_rate = learning_rate;
            s.weight_decay = weight_decay;
            TrainState state(s);
            return train(adapter, task, steps, state);
        },
        py::arg("adapter"), py::arg("task"), py::arg("steps"), py::arg("learning_rate") = 1e-3,
        py::arg("weight_decay") = 0.0);
    m.def(
        "grad_check",
        [](const Adapter& adapter, const LinearTask& task, double h, double tolerance, std::uint64_t seed) {
            GradCheckOptions o;
            o.h = h;
            o.tolerance = tolerance;
            o.seed = seed;
            const auto r = grad_check(adapter, task, o);
            py::dict d;
            d["loss"] = r.loss;
            d["max_rel_error"] = r.max_rel_error;
            d["entries_checked"] = r.entries_checked;
            d["total_entries"] = r.total_entries;
            d["passed"] = r.passed;
            return d;
        },
        py::arg("adapter"), py::arg("task"), py::arg("h") = 1e-5, py::arg("tolerance") = 1e-6, py::arg("seed") = 0);

    m.def("numerical_rank", &numerical_rank, py::arg("m"), py::arg("tol_factor") = kDefaultRankTolerance);
    m.def(
        "rank_sweep",
        [](const std::string& spec_json) {
            const auto report = rank_sweep(parse_sweep_spec(nlohmann::json::parse(spec_json)));
            py::list rows;
            for (const auto& row : report.rows) rows.append(row_dict(row));
            return py::make_tuple(rows, report.skipped);
        },
        py::arg("spec_json"));

    m.def("read_matrix", [](const std::string& path) { return io::read_matrix(path); }, py::arg("path"));
    m.def("write_matrix", [](const Matrix& mat, const std::string& path) { io::write_matrix(mat, path); },
          py::arg("m"), py::arg("path"));
    m.def("encode_matrix", [](const Matrix& mat) {
        const auto bytes = io::encode_matrix(mat);
        return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
    });
}
