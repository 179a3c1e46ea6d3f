#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace transport {

enum class ErrorKind {
  SingularOffDiagonal,
  NonHermitianDiagonal,
  DimensionMismatch,
  SizeLimitExceeded,
  GridTooCoarse,
  SupportOutsideWindow,
  WindowTooSmall,
  InvalidSpec,
  ChainTooLong,
  WindowTooShort,
  QuadratureNotConverged,
  PsiEnvelopeViolated,
  NoCertificateFound,
  ConfigInvalid,
  EigensolverFailed,
};

/// Whether an error rejects the caller's input or reports a numerical
/// procedure that ran but did not meet its tolerance.
enum class ErrorCategory { Validation, Numerical };

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::SingularOffDiagonal: return "SingularOffDiagonal";
    case ErrorKind::NonHermitianDiagonal: return "NonHermitianDiagonal";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::SizeLimitExceeded: return "SizeLimitExceeded";
    case ErrorKind::GridTooCoarse: return "GridTooCoarse";
    case ErrorKind::SupportOutsideWindow: return "SupportOutsideWindow";
    case ErrorKind::WindowTooSmall: return "WindowTooSmall";
    case ErrorKind::InvalidSpec: return "InvalidSpec";
    case ErrorKind::ChainTooLong: return "ChainTooLong";
    case ErrorKind::WindowTooShort: return "WindowTooShort";
    case ErrorKind::QuadratureNotConverged: return "QuadratureNotConverged";
    case ErrorKind::PsiEnvelopeViolated: return "PsiEnvelopeViolated";
    case ErrorKind::NoCertificateFound: return "NoCertificateFound";
    case ErrorKind::ConfigInvalid: return "ConfigInvalid";
    case ErrorKind::EigensolverFailed: return "EigensolverFailed";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message,
        ErrorCategory category = ErrorCategory::Validation)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind),
        category_(category) {}

  ErrorKind kind() const noexcept { return kind_; }
  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorKind kind_;
  ErrorCategory category_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message, ErrorCategory::Validation);
}

[[noreturn]] inline void fail_numerical(ErrorKind kind, const std::string& message) {
  throw Error(kind, message, ErrorCategory::Numerical);
}

}  // namespace transport
