#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace grhd {

enum class ErrorCode {
  MalformedFilename,
  IoError,
  UnsupportedFormat,
  InvalidConfig,
  ContractViolation,
  EmptySplit,
  SignalTooShort,
  LabelOutOfRange,
  ShapeMismatch,
  InvalidSchedule,
  DivergenceDetected,
  UnknownSection,
  EmptyBank,
  DegenerateLabels,
  InvalidP,
  NonpositiveValue,
  VersionMismatch,
  ChecksumMismatch,
  NoTrainingData,
};

std::string_view to_string(ErrorCode code);

// Single exception type for the whole library; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace grhd
