#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace aad {

enum class ErrorCode {
    InvalidBand,
    InvalidOrder,
    InsufficientLength,
    InvalidRatio,
    ZeroVariance,
    InvalidExponent,
    Shape,
    InvalidLag,
    SingularSystem,
    NoWindows,
    InvalidArgument,
    MissingFile,
    CorruptDataset,
    Schema,
    Config,
    Plan,
    Compatibility,
    Io,
};

constexpr std::string_view to_string(ErrorCode code) noexcept
{
    switch (code) {
    case ErrorCode::InvalidBand: return "invalid-band";
    case ErrorCode::InvalidOrder: return "invalid-order";
    case ErrorCode::InsufficientLength: return "insufficient-length";
    case ErrorCode::InvalidRatio: return "invalid-ratio";
    case ErrorCode::ZeroVariance: return "zero-variance";
    case ErrorCode::InvalidExponent: return "invalid-exponent";
    case ErrorCode::Shape: return "shape";
    case ErrorCode::InvalidLag: return "invalid-lag";
    case ErrorCode::SingularSystem: return "singular-system";
    case ErrorCode::NoWindows: return "no-windows";
    case ErrorCode::InvalidArgument: return "invalid-argument";
    case ErrorCode::MissingFile: return "missing-file";
    case ErrorCode::CorruptDataset: return "corrupt-dataset";
    case ErrorCode::Schema: return "schema";
    case ErrorCode::Config: return "config";
    case ErrorCode::Plan: return "plan";
    case ErrorCode::Compatibility: return "compatibility";
    case ErrorCode::Io: return "io";
    }
    return "unknown";
}

/// Library-wide exception. Every failure raised by the aad headers is an
/// `aad::Error` carrying a stable machine-readable code.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code)
    {
    }

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message)
{
    throw Error(code, message);
}

} // namespace aad
