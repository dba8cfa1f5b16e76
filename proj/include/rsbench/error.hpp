#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rsbench {

enum class ErrorCode {
    DimensionMismatch,
    SingularCovariance,
    NonpositiveHorizon,
    NegativeTheta,
    TimeOutOfRange,
    BlowUp,
    EigenvalueViolation,
    RepresentationMismatch,
    SaddleViolation,
    ConfigError,
    NonfiniteState,
    MeasureMismatch,
    ParseError,
    SchemaError,
    NonMonotoneDates,
    RankDeficient,
    WeightSumError,
    InsufficientData,
    EquivalenceFailure,
    IoError,
    VerificationFailure,
};

std::string_view code_name(ErrorCode code) noexcept;

/// Exception carrying a machine-readable code. Every module reports failures
/// through this type; the CLI maps it to `ERROR <code>: <message>`.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace rsbench
