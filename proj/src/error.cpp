#include "rsbench/error.hpp"

namespace rsbench {

std::string_view code_name(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::SingularCovariance: return "SingularCovariance";
        case ErrorCode::NonpositiveHorizon: return "NonpositiveHorizon";
        case ErrorCode::NegativeTheta: return "NegativeTheta";
        case ErrorCode::TimeOutOfRange: return "TimeOutOfRange";
        case ErrorCode::BlowUp: return "BlowUp";
        case ErrorCode::EigenvalueViolation: return "EigenvalueViolation";
        case ErrorCode::RepresentationMismatch: return "RepresentationMismatch";
        case ErrorCode::SaddleViolation: return "SaddleViolation";
        case ErrorCode::ConfigError: return "ConfigError";
        case ErrorCode::NonfiniteState: return "NonfiniteState";
        case ErrorCode::MeasureMismatch: return "MeasureMismatch";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::SchemaError: return "SchemaError";
        case ErrorCode::NonMonotoneDates: return "NonMonotoneDates";
        case ErrorCode::RankDeficient: return "RankDeficient";
        case ErrorCode::WeightSumError: return "WeightSumError";
        case ErrorCode::InsufficientData: return "InsufficientData";
        case ErrorCode::EquivalenceFailure: return "EquivalenceFailure";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::VerificationFailure: return "VerificationFailure";
    }
    return "Unknown";
}

}  // namespace rsbench
