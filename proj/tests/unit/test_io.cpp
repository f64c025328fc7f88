#include <doctest.h>

#include <cstring>
#include <fstream>

#include "smoa/config.hpp"
#include "smoa/error.hpp"
#include "smoa/io.hpp"
#include "smoa/random.hpp"
#include "unit/support.hpp"

using namespace smoa;

namespace {
ErrorKind kind_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected smoa::Error");
    return ErrorKind::io;
}
}  // namespace

TEST_CASE("binary header and payload layout") {
    const auto bytes = io::encode_matrix(Matrix::Zero(1, 1));
    CHECK(bytes.size() == 13 + 8);
    CHECK(std::memcmp(bytes.data(), "SMOA", 4) == 0);
    CHECK(bytes[4] == 0x01);
    CHECK(bytes[5] == 1);
    CHECK(bytes[9] == 1);

    Matrix m(2, 3);
    m << 1, 2, 3, 4, 5, 6;
    const auto b23 = io::encode_matrix(m);
    // 2*3 values * 8 bytes.
    CHECK(b23.size() - io::kHeaderBytes == 48);
    // Row-major: third value is m(0,2) = 3.0, little-endian.
    double third = 0.0;
    std::memcpy(&third, b23.data() + io::kHeaderBytes + 16, 8);
    CHECK(third == 3.0);
    double fourth = 0.0;
    std::memcpy(&fourth, b23.data() + io::kHeaderBytes + 24, 8);
    CHECK(fourth == 4.0);
}

TEST_CASE("binary identity file decodes to identity") {
    std::vector<std::uint8_t> bytes = {'S', 'M', 'O', 'A', 0x01, 2, 0, 0, 0, 2, 0, 0, 0};
    for (double v : {1.0, 0.0, 0.0, 1.0}) {
        std::uint64_t u;
        std::memcpy(&u, &v, 8);
        for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
    }
    CHECK(io::decode_matrix(bytes) == Matrix::Identity(2, 2));

    auto dir = testing::scratch_dir("io");
    io::write_matrix(Matrix::Identity(4, 4), dir / "eye.smoa");
    CHECK(io::read_matrix(dir / "eye.smoa") == Matrix::Identity(4, 4));
}

TEST_CASE("binary round trip is bitwise for random matrices") {
    auto dir = testing::scratch_dir("io");
    Rng rng(20240611);
    for (int trial = 0; trial < 5; ++trial) {
        Matrix m = rng.gaussian(64, 64, std::pow(10.0, trial - 2));
        m(0, 0) = -0.0;
        m(1, 1) = 5e-324;  // smallest subnormal
        const auto path = dir / "m.smoa";
        io::write_matrix(m, path);
        const auto raw = io::read_bytes(path);
        const Matrix back = io::read_matrix(path);
        CHECK(bitwise_equal(m, back));
        CHECK(io::encode_matrix(back) == raw);
    }
}

TEST_CASE("CSV parse and value-identical round trip") {
    const Matrix m = io::parse_csv("3.0,2.0\n1.0,0.5");
    Matrix expected(2, 2);
    expected << 3, 2, 1, 0.5;
    CHECK(m == expected);

    auto dir = testing::scratch_dir("io");
    Rng rng(7);
    const Matrix r = rng.gaussian(9, 4, 1e3);
    io::write_matrix(r, dir / "r.csv");
    CHECK(bitwise_equal(io::read_matrix(dir / "r.csv"), r));
    CHECK(io::format_real(0.1) == "0.10000000000000001");
}

TEST_CASE("read errors are classified") {
    auto dir = testing::scratch_dir("io");
    CHECK(kind_of([&] { io::read_matrix(dir / "missing.smoa"); }) == ErrorKind::io);

    io::write_text("NOPE\x01", dir / "bad.smoa");
    CHECK(kind_of([&] { io::read_matrix(dir / "bad.smoa"); }) == ErrorKind::format);

    auto bytes = io::encode_matrix(Matrix::Ones(3, 3));
    bytes.pop_back();
    io::write_bytes(bytes, dir / "short.smoa");
    CHECK(kind_of([&] { io::read_matrix(dir / "short.smoa"); }) == ErrorKind::truncation);

    auto nan = io::encode_matrix(Matrix::Ones(1, 1));
    const double q = std::numeric_limits<double>::quiet_NaN();
    std::memcpy(nan.data() + io::kHeaderBytes, &q, 8);
    io::write_bytes(nan, dir / "nan.smoa");
    CHECK(kind_of([&] { io::read_matrix(dir / "nan.smoa"); }) == ErrorKind::data);

    CHECK(kind_of([] { io::parse_csv("1,2\n3"); }) == ErrorKind::format);
    CHECK(kind_of([] { io::parse_csv("1,abc"); }) == ErrorKind::format);
    CHECK(kind_of([] { io::parse_csv("1,inf"); }) == ErrorKind::data);
    CHECK(kind_of([&] { io::write_matrix(Matrix::Ones(1, 1), dir / "no" / "such" / "dir.smoa"); }) ==
          ErrorKind::io);
}

TEST_CASE("config defaults, strictness and validation") {
    const auto cfg = parse_config(nlohmann::json::parse(R"({"d_out":64,"d_in":64,"K":2,"r":16,"seed":7})"));
    CHECK(cfg.alpha == 16.0);
    CHECK(cfg.mode == RankMode::budget);
    CHECK(cfg.init_std == 0.02);
    CHECK(cfg.rank_tolerance_factor == 1e-10);
    CHECK(cfg.seed == 7);

    try {
        parse_config(nlohmann::json::parse(R"({"d_out":64,"d_in":64,"K":0,"r":16,"seed":7})"));
        FAIL("expected validation error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::validation);
        CHECK(std::string(e.what()).find("K must be ≥ 1") != std::string::npos);
    }
    CHECK(kind_of([] { parse_config(nlohmann::json::parse(R"({"d_out":8,"d_in":8,"K":2,"r":4,"seed":1,"rnak":3})")); }) ==
          ErrorKind::validation);
    CHECK(kind_of([] { parse_config(nlohmann::json::parse(R"({"d_out":8,"d_in":8,"K":4,"r":2,"seed":1})")); }) ==
          ErrorKind::validation);
    CHECK(kind_of([] { parse_config(nlohmann::json::parse(R"({"d_out":8,"d_in":4,"K":5,"r":8,"seed":1})")); }) ==
          ErrorKind::validation);
    // flexible mode lifts the r >= K rule
    CHECK_NOTHROW(parse_config(nlohmann::json::parse(R"({"d_out":8,"d_in":8,"K":4,"r":2,"seed":1,"mode":"flexible"})")));

    auto dir = testing::scratch_dir("io");
    RunConfig c = make_config(32, 48, 4, 9, 123, RankMode::flexible);
    c.alpha = 2.5;
    c.init_std = 0.1;
    write_config(c, dir / "cfg.json");
    CHECK(read_config(dir / "cfg.json") == c);
}

TEST_CASE("report CSV has a fixed header") {
    std::vector<io::ReportRow> rows(1);
    rows[0] = {"lora", 64, 4, 1, 3, 512, 4, 4, 0.25};
    CHECK(io::format_report(rows) ==
          "method,d,r,K,seed,param_count,numerical_rank,frobenius_error\nlora,64,4,1,3,512,4,0.25\n");
    CHECK(io::format_report({}) == std::string(io::kReportHeader) + "\n");
    const double losses[] = {1.0, 0.5};
    CHECK(io::format_loss_trace(losses) == "step,loss\n0,1\n1,0.5\n");
}
