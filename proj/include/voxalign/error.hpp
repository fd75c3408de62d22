#pragma once

#include <stdexcept>
#include <string>

namespace voxalign {

enum class ErrorCode {
    ZeroVector,
    DimensionMismatch,
    EmptyInput,
    EmptyBatch,
    InvalidWindowConfig,
    MissingTeacher,
    InvalidArchitecture,
    StaleCache,
    IoError,
    FormatError,
    ShapeMismatch,
    ChecksumMismatch,
    InvalidConfig,
    InvalidFraction,
    NonFiniteGradient,
    NonFiniteLoss,
    EmptySplit,
    DegenerateLabels,
    MissingPair,
};

const char* to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message);

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace voxalign
