#pragma once

#include <stdexcept>
#include <string>

namespace carbonmfg {

enum class ErrorCode {
  kSingularMatrix,
  kNonFinite,
  kNotPSD,
  kRiccatiBlowup,
  kInvalidParams,
  kDecompositionMismatch,
  kUndefinedPoA,
  kAllRejected,
  kConfig,
  kIO,
};

const char* to_string(ErrorCode code);

// Every failure raised by the library carries one of the codes above so the
// CLI can map it onto its exit-code contract.
class SolverError : public std::runtime_error {
 public:
  SolverError(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kSingularMatrix: return "SingularMatrix";
    case ErrorCode::kNonFinite: return "NonFinite";
    case ErrorCode::kNotPSD: return "NotPSD";
    case ErrorCode::kRiccatiBlowup: return "RiccatiBlowup";
    case ErrorCode::kInvalidParams: return "InvalidParams";
    case ErrorCode::kDecompositionMismatch: return "DecompositionMismatch";
    case ErrorCode::kUndefinedPoA: return "UndefinedPoA";
    case ErrorCode::kAllRejected: return "AllRejected";
    case ErrorCode::kConfig: return "ConfigError";
    case ErrorCode::kIO: return "IOError";
  }
  return "Unknown";
}

}  // namespace carbonmfg
