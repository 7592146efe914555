#include "agedetect/error.hpp"

namespace agedetect {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::Io: return "Io";
        case ErrorCode::MissingColumn: return "MissingColumn";
        case ErrorCode::MalformedRow: return "MalformedRow";
        case ErrorCode::NonMonotonicTimestamp: return "NonMonotonicTimestamp";
        case ErrorCode::EmptySession: return "EmptySession";
        case ErrorCode::UnknownGroupLabel: return "UnknownGroupLabel";
        case ErrorCode::GroupTooSmall: return "GroupTooSmall";
        case ErrorCode::EmptyPenDown: return "EmptyPenDown";
        case ErrorCode::EmptySequence: return "EmptySequence";
        case ErrorCode::EmptyInput: return "EmptyInput";
        case ErrorCode::MissingGroup: return "MissingGroup";
        case ErrorCode::MissingChannel: return "MissingChannel";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::OutOfRangeGroup: return "OutOfRangeGroup";
        case ErrorCode::EmptyPredictions: return "EmptyPredictions";
        case ErrorCode::ModelFormatError: return "ModelFormatError";
        case ErrorCode::DegenerateData: return "DegenerateData";
        case ErrorCode::DegenerateScores: return "DegenerateScores";
        case ErrorCode::NumericFailure: return "NumericFailure";
        case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    }
    return "Unknown";
}

ErrorClass classify(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::DegenerateData:
        case ErrorCode::DegenerateScores:
        case ErrorCode::NumericFailure:
            return ErrorClass::Numeric;
        case ErrorCode::ConfigInvalid:
            return ErrorClass::Usage;
        default:
            return ErrorClass::Data;
    }
}

}  // namespace agedetect
