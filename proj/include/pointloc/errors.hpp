#pragma once

#include <stdexcept>
#include <string>

namespace pointloc {

enum class ErrorCode {
  kInvalidArgument,
  kInvalidDepth,
  kInvalidKeyPose,
  kFormatError,
  kIoError,
  kInsufficientData,
  kInsufficientPoints,
  kDegenerateConfiguration,
  kRegistrationFailed,
  kEmptyIndex,
};

const char* to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so
/// callers (the CLI in particular) can map it to an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kInvalidDepth: return "invalid-depth";
    case ErrorCode::kInvalidKeyPose: return "invalid-key-pose";
    case ErrorCode::kFormatError: return "format-error";
    case ErrorCode::kIoError: return "io-error";
    case ErrorCode::kInsufficientData: return "insufficient-data";
    case ErrorCode::kInsufficientPoints: return "insufficient-points";
    case ErrorCode::kDegenerateConfiguration: return "degenerate-configuration";
    case ErrorCode::kRegistrationFailed: return "registration-failed";
    case ErrorCode::kEmptyIndex: return "empty-index";
  }
  return "unknown";
}

}  // namespace pointloc
