#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cfair {

enum class ErrorCode {
    // model structure
    CycleDetected,
    DanglingParent,
    BackgroundHasParents,
    MissingEquation,
    WeightArityMismatch,
    DuplicateVariable,
    InvalidName,
    InvalidPrior,
    InvalidEquation,
    InvalidModel,
    UnknownVariable,
    InterveneOnBackground,
    DomainViolation,
    // inference
    NotLinearGaussian,
    SingularConditioning,
    ZeroPosteriorMass,
    NonFiniteDensity,
    UnsupportedConstraint,
    // estimation
    DimensionMismatch,
    DegenerateInput,
    DegenerateScale,
    EmptyInputs,
    // auditing
    UnattainableValue,
    InvalidPath,
    EmptyGroup,
    NoAcceptedSamples,
    ConstraintNotInvertible,
    UnsupportedScenario,
    // plumbing
    Config,
    Io,
    Parse,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace cfair
