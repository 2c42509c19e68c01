#include "qa/errors.hpp"

namespace qa {

std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::argument: return "argument";
        case ErrorKind::not_found: return "not_found";
        case ErrorKind::config: return "config";
        case ErrorKind::transport: return "transport";
        case ErrorKind::validation: return "validation";
        case ErrorKind::insufficient_data: return "insufficient_data";
        case ErrorKind::export_failure: return "export";
        case ErrorKind::format: return "format";
    }
    return "unknown";
}

}  // namespace qa
