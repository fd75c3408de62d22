#include "voxalign/error.hpp"

namespace voxalign {

const char* to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::ZeroVector: return "ZeroVector";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::EmptyInput: return "EmptyInput";
        case ErrorCode::EmptyBatch: return "EmptyBatch";
        case ErrorCode::InvalidWindowConfig: return "InvalidWindowConfig";
        case ErrorCode::MissingTeacher: return "MissingTeacher";
        case ErrorCode::InvalidArchitecture: return "InvalidArchitecture";
        case ErrorCode::StaleCache: return "StaleCache";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::FormatError: return "FormatError";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
        case ErrorCode::InvalidConfig: return "InvalidConfig";
        case ErrorCode::InvalidFraction: return "InvalidFraction";
        case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
        case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
        case ErrorCode::EmptySplit: return "EmptySplit";
        case ErrorCode::DegenerateLabels: return "DegenerateLabels";
        case ErrorCode::MissingPair: return "MissingPair";
    }
    return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

}  // namespace voxalign
