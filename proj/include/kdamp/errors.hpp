#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace kdamp {

/// Failure categories raised by the library. The CLI maps configuration
/// problems (Validation, InvalidArgument, InvalidPerturbation,
/// MismatchedConfigs) to exit status 2 and every other code to exit status 3.
enum class Errc {
  Validation,
  InvalidArgument,
  UnsupportedOrder,
  Divergent,
  MassNotCovered,
  DomainError,
  CrossCheckFailure,
  MarginalError,
  NoZeroFound,
  RootNotConverged,
  StepSolveFailure,
  WindowTooNoisy,
  UnstableKernel,
  InvalidPerturbation,
  BlowupDetected,
  GridTooCoarse,
  MismatchedConfigs,
};

constexpr std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::Validation: return "Validation";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::UnsupportedOrder: return "UnsupportedOrder";
    case Errc::Divergent: return "Divergent";
    case Errc::MassNotCovered: return "MassNotCovered";
    case Errc::DomainError: return "DomainError";
    case Errc::CrossCheckFailure: return "CrossCheckFailure";
    case Errc::MarginalError: return "MarginalError";
    case Errc::NoZeroFound: return "NoZeroFound";
    case Errc::RootNotConverged: return "RootNotConverged";
    case Errc::StepSolveFailure: return "StepSolveFailure";
    case Errc::WindowTooNoisy: return "WindowTooNoisy";
    case Errc::UnstableKernel: return "UnstableKernel";
    case Errc::InvalidPerturbation: return "InvalidPerturbation";
    case Errc::BlowupDetected: return "BlowupDetected";
    case Errc::GridTooCoarse: return "GridTooCoarse";
    case Errc::MismatchedConfigs: return "MismatchedConfigs";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

}  // namespace kdamp
