#include <doctest.h>

#include <cstdlib>
#include <sstream>

#include <json.hpp>

#include "smoa/cli.hpp"
#include "smoa/io.hpp"
#include "unit/support.hpp"

using namespace smoa;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result smoa_cli(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

fs::path write_diag(const fs::path& dir) {
    const auto path = dir / "diag.csv";
    io::write_text("3,0,0\n0,2,0\n0,0,1\n", path);
    return path;
}

std::string count_lines(const std::string& s) { return std::to_string(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_CASE("analyze prints the partition") {
    const auto dir = testing::scratch_dir("cli");
    const auto input = write_diag(dir).string();

    auto r = smoa_cli({"analyze", "--input", input, "--k", "2", "--json", (dir / "p.json").string()});
    CHECK(r.code == 0);
    CHECK(r.out.find("I_1={1} (share 0.500)") != std::string::npos);
    CHECK(r.out.find("I_2={2,3} (share 0.500)") != std::string::npos);
    const auto doc = nlohmann::json::parse(io::read_text(dir / "p.json"));
    CHECK(doc["index_sets"] == nlohmann::json::parse("[[1],[2,3]]"));
    CHECK(doc["K"] == 2);

    r = smoa_cli({"analyze", "--input", input, "--k", "1"});
    CHECK(r.code == 0);
    CHECK(r.out.find("I_1={1..3} (share 1.000)") != std::string::npos);

    r = smoa_cli({"analyze", "--input", input, "--k", "4"});
    CHECK(r.code == 1);
    CHECK(r.err.find("K must be ≤") != std::string::npos);
    CHECK(r.err.find("partition") != std::string::npos);

    r = smoa_cli({"analyze", "--input", (dir / "absent.smoa").string(), "--k", "2"});
    CHECK(r.code == 3);
    CHECK_FALSE(r.err.empty());

    // identical inputs, identical output bytes
    CHECK(smoa_cli({"analyze", "--input", input, "--k", "2"}).out == smoa_cli({"analyze", "--input", input, "--k", "2"}).out);
}

TEST_CASE("analyze reports empty subspaces") {
    const auto dir = testing::scratch_dir("cli");
    io::write_text("100,0,0\n0,1,0\n0,0,1\n", dir / "spike.csv");
    auto r = smoa_cli({"analyze", "--input", (dir / "spike.csv").string(), "--k", "3"});
    CHECK(r.code == 0);
    CHECK(r.out.find("I_1={}") != std::string::npos);
    CHECK(r.out.find("diagnostic: empty subspace(s): I_1, I_2") != std::string::npos);
}

TEST_CASE("rank-bench") {
    const auto dir = testing::scratch_dir("cli");
    io::write_text(R"({"methods":["lora"],"d":64,"r_values":[4],"K_values":[1],"n_seeds":5})", dir / "lora.json");
    auto r = smoa_cli({"rank-bench", "--config", (dir / "lora.json").string(), "--out", (dir / "lora.csv").string()});
    CHECK(r.code == 0);
    const auto csv = io::read_text(dir / "lora.csv");
    CHECK(count_lines(csv) == "6");
    std::istringstream lines(csv);
    std::string line;
    std::getline(lines, line);
    CHECK(line == io::kReportHeader);
    while (std::getline(lines, line)) CHECK(line.find("lora,64,4,1,") == 0);
    CHECK(fs::exists(dir / "lora.meta.json"));
    const auto meta = nlohmann::json::parse(io::read_text(dir / "lora.meta.json"));
    CHECK(nlohmann::json::parse(io::read_text(dir / "lora.json")).contains("methods"));
    CHECK(meta.contains("config_hash"));

    io::write_text(R"({"methods":[],"d":64,"r_values":[4],"K_values":[1],"n_seeds":5})", dir / "none.cfg");
    r = smoa_cli({"rank-bench", "--config", (dir / "none.cfg").string(), "--out", (dir / "none.csv").string()});
    CHECK(r.code == 0);
    CHECK(io::read_text(dir / "none.csv") == std::string(io::kReportHeader) + "\n");

    io::write_text(R"({"methods":["smoa"],"d":64,"r_values":[2],"K_values":[4],"n_seeds":5})", dir / "bad.cfg");
    r = smoa_cli({"rank-bench", "--config", (dir / "bad.cfg").string(), "--out", (dir / "bad.csv").string()});
    CHECK(r.code == 1);
    CHECK(r.err.find("r must be ≥ K") != std::string::npos);

    io::write_text(R"({"methods":["lora"],"d":64})", dir / "short.cfg");
    CHECK(smoa_cli({"rank-bench", "--config", (dir / "short.cfg").string(), "--out", (dir / "x.csv").string()}).code == 1);
}

TEST_CASE("train") {
    const auto dir = testing::scratch_dir("cli");
    io::write_text(R"({"task":{"d":16,"target_rank":0,"n_samples":32,"noise_std":0.0,"seed":3},
                       "adapter":{"K":2,"r":4},"steps":40})",
                   dir / "zero.json");
    auto r = smoa_cli({"train", "--config", (dir / "zero.json").string(), "--method", "smoa", "--out-prefix",
                       (dir / "zero").string()});
    CHECK(r.code == 0);
    const auto trace = io::read_text(dir / "zero.loss.csv");
    CHECK(trace.rfind("step,loss\n0,0\n", 0) == 0);
    CHECK(fs::exists(dir / "zero.adapter.manifest.json"));
    CHECK(fs::exists(dir / "zero.report.csv"));

    io::write_text(R"({"task":{"d":16,"target_rank":12,"n_samples":48,"seed":1},
                       "adapter":{"K":2,"r":8},"steps":60})",
                   dir / "task.json");
    for (const char* method : {"smoa", "lora"}) {
        const auto a = smoa_cli({"train", "--config", (dir / "task.json").string(), "--method", method,
                                 "--out-prefix", (dir / "a").string(), "--seeds", "2"});
        const auto first = io::read_text(dir / "a.seed1.loss.csv");
        const auto b = smoa_cli({"train", "--config", (dir / "task.json").string(), "--method", method,
                                 "--out-prefix", (dir / "b").string(), "--seeds", "2"});
        CHECK(a.code == 0);
        CHECK(b.code == 0);
        CHECK(first == io::read_text(dir / "b.seed1.loss.csv"));
        CHECK(io::read_text(dir / "a.seed2.loss.csv") == io::read_text(dir / "b.seed2.loss.csv"));
        CHECK(count_lines(first) == "62");
    }
    const auto report = io::read_text(dir / "a.report.csv");
    CHECK(report.find("lora,16,4,2,1,128,") != std::string::npos);

    io::write_text(R"({"task":{"d":8,"target_rank":4,"n_samples":16,"seed":1},
                       "adapter":{"K":1,"r":2},"optimizer":{"learning_rate":1e300},"steps":10})",
                   dir / "wild.json");
    r = smoa_cli({"train", "--config", (dir / "wild.json").string(), "--method", "lora", "--out-prefix",
                  (dir / "wild").string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("step") != std::string::npos);

    io::write_text(R"({"task":{"d":8,"target_rank":4,"n_samples":16},"adapter":{"K":1,"r":2,"typo":1}})",
                   dir / "typo.json");
    CHECK(smoa_cli({"train", "--config", (dir / "typo.json").string(), "--method", "lora", "--out-prefix",
                    (dir / "t").string()})
              .code == 1);
}

TEST_CASE("gradcheck") {
    auto r = smoa_cli({"gradcheck", "--d", "8", "--k", "2", "--r", "4", "--method", "smoa", "--seed", "1"});
    CHECK(r.code == 0);
    CHECK(r.out.find("max relative error") != std::string::npos);

    for (const char* method : {"smoa", "lora", "block_lora", "hadamard_w0"}) {
        r = smoa_cli({"gradcheck", "--d", "8", "--k", "2", "--r", "2", "--method", method, "--seed", "2",
                      "--zero-residual"});
        CHECK(r.code == 0);
    }

    r = smoa_cli({"gradcheck", "--d", "8", "--k", "2", "--r", "4", "--method", "smoa", "--seed", "1",
                  "--inject-corruption"});
    CHECK(r.code == 2);
    CHECK(r.err.find("gradcheck failed") != std::string::npos);

    r = smoa_cli({"gradcheck", "--d", "8", "--k", "4", "--r", "2", "--method", "smoa", "--seed", "1"});
    CHECK(r.code == 1);
    CHECK(smoa_cli({"gradcheck", "--d", "8"}).code == 1);
    CHECK(smoa_cli({"nonsense"}).code == 1);
}

TEST_CASE("binary exit codes") {
    const char* bin = std::getenv("SMOA_BIN");
    if (bin == nullptr) return;
    const auto dir = testing::scratch_dir("cli");
    const auto input = write_diag(dir).string();
    auto status = [&](const std::string& args) {
        const int raw = std::system((std::string(bin) + " " + args + " >/dev/null 2>&1").c_str());
        return WEXITSTATUS(raw);
    };
    CHECK(status("analyze --input " + input + " --k 2") == 0);
    CHECK(status("analyze --input " + input + " --k 5") == 1);
    CHECK(status("analyze --input " + (dir / "nope.smoa").string() + " --k 1") == 3);
    CHECK(status("gradcheck --d 8 --k 2 --r 4 --method lora --seed 0 --inject-corruption") == 2);
}
