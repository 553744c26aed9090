#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace backshift {

enum class ErrorCode {
    InsufficientData,
    NeedMultipleEnvironments,
    ShapeError,
    NumericalBreakdown,
    ContractViolation,
    TooLargeForExact,
    Infeasible,
    ModelAssumptionsViolated,
    EstimateUnavailable,
    GenerationFailed,
    StabilityFailed,
    ParseError,
    IoError,
};

constexpr std::string_view to_string(ErrorCode code) noexcept
{
    switch (code) {
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::NeedMultipleEnvironments: return "NeedMultipleEnvironments";
    case ErrorCode::ShapeError: return "ShapeError";
    case ErrorCode::NumericalBreakdown: return "NumericalBreakdown";
    case ErrorCode::ContractViolation: return "ContractViolation";
    case ErrorCode::TooLargeForExact: return "TooLargeForExact";
    case ErrorCode::Infeasible: return "Infeasible";
    case ErrorCode::ModelAssumptionsViolated: return "ModelAssumptionsViolated";
    case ErrorCode::EstimateUnavailable: return "EstimateUnavailable";
    case ErrorCode::GenerationFailed: return "GenerationFailed";
    case ErrorCode::StabilityFailed: return "StabilityFailed";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (the CLI in particular) can branch without string matching.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code)
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

} // namespace backshift
