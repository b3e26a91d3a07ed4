#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace superhedge {

enum class ErrorCode {
    InvalidParams,
    IntensityTooLarge,
    NegativePriceFactor,
    NonRecombiningCoefficients,
    UnknownNode,
    InvalidControl,
    SingularSystem,
    StepContractionFailure,
    NoConvergence,
    TerminalBelowObstacle,
    ObstacleViolation,
    InvalidArgument,
    ConfigInvalid,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure raised by the engine carries one of the codes above so that
/// callers (and the CLI exit path) can tell user errors from numerical ones.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message);

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace superhedge
