#include "grhd/common/error.hpp"

namespace grhd {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedFilename: return "MalformedFilename";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::ContractViolation: return "ContractViolation";
    case ErrorCode::EmptySplit: return "EmptySplit";
    case ErrorCode::SignalTooShort: return "SignalTooShort";
    case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::InvalidSchedule: return "InvalidSchedule";
    case ErrorCode::DivergenceDetected: return "DivergenceDetected";
    case ErrorCode::UnknownSection: return "UnknownSection";
    case ErrorCode::EmptyBank: return "EmptyBank";
    case ErrorCode::DegenerateLabels: return "DegenerateLabels";
    case ErrorCode::InvalidP: return "InvalidP";
    case ErrorCode::NonpositiveValue: return "NonpositiveValue";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::NoTrainingData: return "NoTrainingData";
  }
  return "Unknown";
}

}  // namespace grhd
