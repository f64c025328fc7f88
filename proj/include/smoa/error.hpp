#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace smoa {

enum class ErrorKind {
    format,       // malformed file header or token
    truncation,   // payload shorter or longer than the header claims
    data,         // non-finite entry
    io,           // filesystem failure
    validation,   // config constraint violated
    config,       // structurally invalid request, e.g. K > p
    dimension,    // shape mismatch between operands
    numerical,    // SVD failure, divergence, degenerate spectrum
};

std::string_view to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

}  // namespace smoa
