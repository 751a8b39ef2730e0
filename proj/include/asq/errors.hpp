#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace asq {

enum class ErrorCode {
    ZeroVector,
    DimensionMismatch,
    IndexOutOfRange,
    InvalidArgument,
    NonterminationCap,
    DominanceViolation,
    BudgetExceeded,
    NotSubnormalized,
    ConstructionFailed,
    RelativeEstimateFailed,
    SamplerStarvation,
    NonUnitNorm,
    DimensionNotPowerOfTwo,
    NotNormalized,
    MalformedFrame,
    SessionAbort,
    Io,
};

constexpr std::string_view error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::ZeroVector: return "ZeroVector";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::NonterminationCap: return "NonterminationCap";
        case ErrorCode::DominanceViolation: return "DominanceViolation";
        case ErrorCode::BudgetExceeded: return "BudgetExceeded";
        case ErrorCode::NotSubnormalized: return "NotSubnormalized";
        case ErrorCode::ConstructionFailed: return "ConstructionFailed";
        case ErrorCode::RelativeEstimateFailed: return "RelativeEstimateFailed";
        case ErrorCode::SamplerStarvation: return "SamplerStarvation";
        case ErrorCode::NonUnitNorm: return "NonUnitNorm";
        case ErrorCode::DimensionNotPowerOfTwo: return "DimensionNotPowerOfTwo";
        case ErrorCode::NotNormalized: return "NotNormalized";
        case ErrorCode::MalformedFrame: return "MalformedFrame";
        case ErrorCode::SessionAbort: return "SessionAbort";
        case ErrorCode::Io: return "Io";
    }
    return "Unknown";
}

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string &what)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace asq
