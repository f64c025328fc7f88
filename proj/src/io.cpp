#include "smoa/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include <fmt/format.h>

#include "smoa/error.hpp"

namespace smoa::io {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
}

std::uint64_t get_u64(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

bool is_csv(const std::filesystem::path& path) {
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".csv";
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

}  // namespace

std::vector<std::uint8_t> encode_matrix(const Matrix& m) {
    require_finite(m, "write_matrix");
    if (m.rows() <= 0 || m.cols() <= 0) {
        fail(ErrorKind::dimension, "write_matrix: matrix must have positive dimensions");
    }
    std::vector<std::uint8_t> out;
    out.reserve(kHeaderBytes + 8 * static_cast<std::size_t>(m.size()));
    out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
    out.push_back(kFormatVersion);
    put_u32(out, static_cast<std::uint32_t>(m.rows()));
    put_u32(out, static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            put_u64(out, std::bit_cast<std::uint64_t>(m(i, j)));
        }
    }
    return out;
}

Matrix decode_matrix(std::span<const std::uint8_t> bytes, const std::string& source) {
    if (bytes.size() < kHeaderBytes) {
        fail(ErrorKind::format, fmt::format("{}: file shorter than the {}-byte header", source, kHeaderBytes));
    }
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
        fail(ErrorKind::format, fmt::format("{}: bad magic (expected \"SMOA\")", source));
    }
    if (bytes[4] != kFormatVersion) {
        fail(ErrorKind::format, fmt::format("{}: unsupported format version {}", source, bytes[4]));
    }
    const std::uint32_t rows = get_u32(bytes.data() + 5);
    const std::uint32_t cols = get_u32(bytes.data() + 9);
    if (rows == 0 || cols == 0) {
        fail(ErrorKind::format, fmt::format("{}: zero dimension in header ({}x{})", source, rows, cols));
    }
    const std::uint64_t expected = kHeaderBytes + 8ULL * rows * cols;
    if (bytes.size() != expected) {
        fail(ErrorKind::truncation,
             fmt::format("{}: header declares {}x{} ({} bytes) but file has {} bytes", source, rows, cols,
                         expected, bytes.size()));
    }
    Matrix m(rows, cols);
    const std::uint8_t* p = bytes.data() + kHeaderBytes;
    for (std::uint32_t i = 0; i < rows; ++i) {
        for (std::uint32_t j = 0; j < cols; ++j, p += 8) {
            m(i, j) = std::bit_cast<double>(get_u64(p));
        }
    }
    require_finite(m, source);
    return m;
}

std::string format_real(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

std::string format_csv(const Matrix& m) {
    require_finite(m, "write_matrix");
    std::string out;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j) out += ',';
            out += format_real(m(i, j));
        }
        out += '\n';
    }
    return out;
}

Matrix parse_csv(const std::string& text, const std::string& source) {
    std::vector<std::vector<double>> rows;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view view = trim(line);
        if (view.empty()) continue;
        std::vector<double> row;
        while (true) {
            const auto comma = view.find(',');
            const std::string_view token = trim(view.substr(0, comma));
            double value = 0.0;
            const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
            if (token.empty() || ec != std::errc() || ptr != token.data() + token.size()) {
                fail(ErrorKind::format, fmt::format("{}:{}: cannot parse '{}' as a number", source, line_no, token));
            }
            if (!std::isfinite(value)) {
                fail(ErrorKind::data, fmt::format("{}:{}: non-finite entry '{}'", source, line_no, token));
            }
            row.push_back(value);
            if (comma == std::string_view::npos) break;
            view.remove_prefix(comma + 1);
        }
        if (!rows.empty() && row.size() != rows.front().size()) {
            fail(ErrorKind::format, fmt::format("{}:{}: expected {} columns, found {}", source, line_no,
                                                rows.front().size(), row.size()));
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) {
        fail(ErrorKind::format, fmt::format("{}: empty CSV matrix", source));
    }
    Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
    }
    return m;
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        fail(ErrorKind::io, fmt::format("{}: cannot open for reading", path.string()));
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) {
        fail(ErrorKind::io, fmt::format("{}: read failed", path.string()));
    }
    return bytes;
}

void write_bytes(std::span<const std::uint8_t> bytes, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        fail(ErrorKind::io, fmt::format("{}: cannot open for writing", path.string()));
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        fail(ErrorKind::io, fmt::format("{}: write failed", path.string()));
    }
}

std::string read_text(const std::filesystem::path& path) {
    const auto bytes = read_bytes(path);
    return std::string(bytes.begin(), bytes.end());
}

void write_text(const std::string& text, const std::filesystem::path& path) {
    write_bytes(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()), path);
}

Matrix read_matrix(const std::filesystem::path& path) {
    if (is_csv(path)) {
        return parse_csv(read_text(path), path.string());
    }
    return decode_matrix(read_bytes(path), path.string());
}

void write_matrix(const Matrix& m, const std::filesystem::path& path) {
    if (is_csv(path)) {
        write_text(format_csv(m), path);
    } else {
        write_bytes(encode_matrix(m), path);
    }
}

std::string format_report(std::span<const ReportRow> rows) {
    std::string out = kReportHeader;
    out += '\n';
    for (const auto& row : rows) {
        out += fmt::format("{},{},{},{},{},{},{},{}\n", row.method, row.d, row.r, row.K, row.seed, row.param_count,
                           row.numerical_rank, format_real(row.frobenius_error));
    }
    return out;
}

void write_report(std::span<const ReportRow> rows, const std::filesystem::path& path) {
    write_text(format_report(rows), path);
}

std::string format_loss_trace(std::span<const double> losses) {
    std::string out = "step,loss\n";
    for (std::size_t i = 0; i < losses.size(); ++i) {
        out += fmt::format("{},{}\n", i, format_real(losses[i]));
    }
    return out;
}

}  // namespace smoa::io
