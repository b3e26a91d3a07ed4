#include "superhedge/error.hpp"

namespace superhedge {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::InvalidParams: return "InvalidParams";
        case ErrorCode::IntensityTooLarge: return "IntensityTooLarge";
        case ErrorCode::NegativePriceFactor: return "NegativePriceFactor";
        case ErrorCode::NonRecombiningCoefficients: return "NonRecombiningCoefficients";
        case ErrorCode::UnknownNode: return "UnknownNode";
        case ErrorCode::InvalidControl: return "InvalidControl";
        case ErrorCode::SingularSystem: return "SingularSystem";
        case ErrorCode::StepContractionFailure: return "StepContractionFailure";
        case ErrorCode::NoConvergence: return "NoConvergence";
        case ErrorCode::TerminalBelowObstacle: return "TerminalBelowObstacle";
        case ErrorCode::ObstacleViolation: return "ObstacleViolation";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    }
    return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

}  // namespace superhedge
