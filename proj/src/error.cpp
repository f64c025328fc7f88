#include "smoa/error.hpp"

namespace smoa {

std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
    case ErrorKind::format: return "format error";
    case ErrorKind::truncation: return "truncation error";
    case ErrorKind::data: return "data error";
    case ErrorKind::io: return "I/O error";
    case ErrorKind::validation: return "validation error";
    case ErrorKind::config: return "configuration error";
    case ErrorKind::dimension: return "dimension error";
    case ErrorKind::numerical: return "numerical error";
    }
    return "error";
}

}  // namespace smoa
