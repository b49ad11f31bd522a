#include "cfair/error.hpp"

namespace cfair {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::CycleDetected: return "CycleDetected";
        case ErrorCode::DanglingParent: return "DanglingParent";
        case ErrorCode::BackgroundHasParents: return "BackgroundHasParents";
        case ErrorCode::MissingEquation: return "MissingEquation";
        case ErrorCode::WeightArityMismatch: return "WeightArityMismatch";
        case ErrorCode::DuplicateVariable: return "DuplicateVariable";
        case ErrorCode::InvalidName: return "InvalidName";
        case ErrorCode::InvalidPrior: return "InvalidPrior";
        case ErrorCode::InvalidEquation: return "InvalidEquation";
        case ErrorCode::InvalidModel: return "InvalidModel";
        case ErrorCode::UnknownVariable: return "UnknownVariable";
        case ErrorCode::InterveneOnBackground: return "InterveneOnBackground";
        case ErrorCode::DomainViolation: return "DomainViolation";
        case ErrorCode::NotLinearGaussian: return "NotLinearGaussian";
        case ErrorCode::SingularConditioning: return "SingularConditioning";
        case ErrorCode::ZeroPosteriorMass: return "ZeroPosteriorMass";
        case ErrorCode::NonFiniteDensity: return "NonFiniteDensity";
        case ErrorCode::UnsupportedConstraint: return "UnsupportedConstraint";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::DegenerateInput: return "DegenerateInput";
        case ErrorCode::DegenerateScale: return "DegenerateScale";
        case ErrorCode::EmptyInputs: return "EmptyInputs";
        case ErrorCode::UnattainableValue: return "UnattainableValue";
        case ErrorCode::InvalidPath: return "InvalidPath";
        case ErrorCode::EmptyGroup: return "EmptyGroup";
        case ErrorCode::NoAcceptedSamples: return "NoAcceptedSamples";
        case ErrorCode::ConstraintNotInvertible: return "ConstraintNotInvertible";
        case ErrorCode::UnsupportedScenario: return "UnsupportedScenario";
        case ErrorCode::Config: return "config";
        case ErrorCode::Io: return "io";
        case ErrorCode::Parse: return "parse";
    }
    return "unknown";
}

}  // namespace cfair
