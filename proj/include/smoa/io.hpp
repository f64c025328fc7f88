#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "smoa/matrix.hpp"

namespace smoa::io {

// Binary matrix layout (all little-endian):
//   "SMOA" | version u8 = 0x01 | rows u32 | cols u32 | rows*cols f64, row-major
inline constexpr char kMagic[4] = {'S', 'M', 'O', 'A'};
inline constexpr std::uint8_t kFormatVersion = 0x01;
inline constexpr std::size_t kHeaderBytes = 13;

std::vector<std::uint8_t> encode_matrix(const Matrix& m);
Matrix decode_matrix(std::span<const std::uint8_t> bytes, const std::string& source = "<memory>");

std::string format_csv(const Matrix& m);
Matrix parse_csv(const std::string& text, const std::string& source = "<memory>");

/// Reads a matrix; `.csv` selects CSV, any other extension the binary format.
Matrix read_matrix(const std::filesystem::path& path);

/// Writes a matrix; `.csv` selects CSV (17 significant digits, no header),
/// any other extension the binary format.
void write_matrix(const Matrix& m, const std::filesystem::path& path);

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);
void write_bytes(std::span<const std::uint8_t> bytes, const std::filesystem::path& path);
std::string read_text(const std::filesystem::path& path);
void write_text(const std::string& text, const std::filesystem::path& path);

/// Shortest-roundtrip-safe decimal: 17 significant digits.
std::string format_real(double v);

/// One row of a sweep or training report.
struct ReportRow {
    std::string method;
    int d = 0;
    int r = 0;
    int K = 0;
    std::uint64_t seed = 0;
    std::int64_t param_count = 0;
    int numerical_rank = 0;
    int rank_upper_bound = 0;  // not part of the CSV; carried in the JSON sidecar
    double frobenius_error = 0.0;
};

inline constexpr const char* kReportHeader =
    "method,d,r,K,seed,param_count,numerical_rank,frobenius_error";

std::string format_report(std::span<const ReportRow> rows);
void write_report(std::span<const ReportRow> rows, const std::filesystem::path& path);

/// `step,loss` CSV for a training trace; entry i is the loss after i updates.
std::string format_loss_trace(std::span<const double> losses);

}  // namespace smoa::io
