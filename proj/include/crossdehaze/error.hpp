#pragma once

#include <stdexcept>
#include <string>

namespace crossdehaze {

/// Error categories carried by every exception thrown from this library.
/// The CLI maps these onto process exit codes.
enum class Errc {
    file_not_found,
    malformed_header,
    truncated_payload,
    unsupported_format,
    io_failure,
    dimension_mismatch,
    out_of_range,
    invalid_argument,
    singular_statistics,
    numerical_failure,
    config_error,
};

inline const char* errc_name(Errc c) {
    switch (c) {
        case Errc::file_not_found: return "file_not_found";
        case Errc::malformed_header: return "malformed_header";
        case Errc::truncated_payload: return "truncated_payload";
        case Errc::unsupported_format: return "unsupported_format";
        case Errc::io_failure: return "io_failure";
        case Errc::dimension_mismatch: return "dimension_mismatch";
        case Errc::out_of_range: return "out_of_range";
        case Errc::invalid_argument: return "invalid_argument";
        case Errc::singular_statistics: return "singular_statistics";
        case Errc::numerical_failure: return "numerical_failure";
        case Errc::config_error: return "config_error";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message)
        : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& message) {
    throw Error(code, message);
}

inline void require(bool condition, Errc code, const std::string& message) {
    if (!condition) fail(code, message);
}

}  // namespace crossdehaze
