#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hkv {

enum class ErrorCode {
    invalid_key,
    oversize,
    out_of_range,
    size_mismatch,
    device_full,
    device_empty,
    dead_segment,
    io_error,
    invalid_config,
    parse_error,
    infeasible_spec,
};

constexpr std::string_view to_string(ErrorCode code) noexcept
{
    switch (code) {
    case ErrorCode::invalid_key: return "invalid_key";
    case ErrorCode::oversize: return "oversize";
    case ErrorCode::out_of_range: return "out_of_range";
    case ErrorCode::size_mismatch: return "size_mismatch";
    case ErrorCode::device_full: return "device_full";
    case ErrorCode::device_empty: return "device_empty";
    case ErrorCode::dead_segment: return "dead_segment";
    case ErrorCode::io_error: return "io_error";
    case ErrorCode::invalid_config: return "invalid_config";
    case ErrorCode::parse_error: return "parse_error";
    case ErrorCode::infeasible_spec: return "infeasible_spec";
    }
    return "unknown";
}

/// Every contract violation in the library surfaces as an Error carrying a code,
/// so callers can branch on the code rather than on message text.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code)
    {
    }

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace hkv
