#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace agedetect {

enum class ErrorCode {
    // input data
    Io,
    MissingColumn,
    MalformedRow,
    NonMonotonicTimestamp,
    EmptySession,
    UnknownGroupLabel,
    GroupTooSmall,
    EmptyPenDown,
    EmptySequence,
    EmptyInput,
    MissingGroup,
    MissingChannel,
    DimensionMismatch,
    OutOfRangeGroup,
    EmptyPredictions,
    ModelFormatError,
    // numerics
    DegenerateData,
    DegenerateScores,
    NumericFailure,
    // usage
    ConfigInvalid,
};

/// Coarse error class; the CLI maps each class to its own exit code.
enum class ErrorClass { Usage, Data, Numeric };

std::string_view to_string(ErrorCode code) noexcept;
ErrorClass classify(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }
    ErrorClass error_class() const noexcept { return classify(code_); }

private:
    ErrorCode code_;
};

}  // namespace agedetect
