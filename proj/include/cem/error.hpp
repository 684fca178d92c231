#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cem {

enum class ErrorCode {
    EmptySample,
    GridTooNarrow,
    StepMismatch,
    DegenerateKernel,
    LengthMismatch,
    TooFewSamples,
    DegenerateInput,
    TooFewDatasets,
    NonFiniteObjective,
    RankDeficient,
    DimensionMismatch,
    NonInvertiblePsi,
    NonInjectivePhi,
    InvalidDeconvolution,
    AnmMisfit,
    TypeMismatch,
    UnsupportedScenario,
    ShapeMismatch,
    NonMonotonePhi,
    UnknownMechanism,
    InvalidArgument,
    IoError,
    InvalidConfig,
    MalformedCsv,
};

constexpr std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::EmptySample: return "EmptySample";
        case ErrorCode::GridTooNarrow: return "GridTooNarrow";
        case ErrorCode::StepMismatch: return "StepMismatch";
        case ErrorCode::DegenerateKernel: return "DegenerateKernel";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::TooFewSamples: return "TooFewSamples";
        case ErrorCode::DegenerateInput: return "DegenerateInput";
        case ErrorCode::TooFewDatasets: return "TooFewDatasets";
        case ErrorCode::NonFiniteObjective: return "NonFiniteObjective";
        case ErrorCode::RankDeficient: return "RankDeficient";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::NonInvertiblePsi: return "NonInvertiblePsi";
        case ErrorCode::NonInjectivePhi: return "NonInjectivePhi";
        case ErrorCode::InvalidDeconvolution: return "InvalidDeconvolution";
        case ErrorCode::AnmMisfit: return "AnmMisfit";
        case ErrorCode::TypeMismatch: return "TypeMismatch";
        case ErrorCode::UnsupportedScenario: return "UnsupportedScenario";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::NonMonotonePhi: return "NonMonotonePhi";
        case ErrorCode::UnknownMechanism: return "UnknownMechanism";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::InvalidConfig: return "InvalidConfig";
        case ErrorCode::MalformedCsv: return "MalformedCsv";
    }
    return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (and the CLI exit-code mapping) can branch without parsing text.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
    throw Error(code, what);
}

inline void require(bool condition, ErrorCode code, const std::string& what) {
    if (!condition) fail(code, what);
}

}  // namespace cem
