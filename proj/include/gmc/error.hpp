#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gmc {

enum class ErrorCode {
  NonFinite,
  EmptyBatch,
  LabelMismatch,
  MissingLabels,
  DimensionMismatch,
  NotSymmetric,
  NotPositiveSemidefinite,
  DecompositionFailure,
  SpectralRadiusTooLarge,
  NoConvergence,
  TooFewSamples,
  DegenerateNeighborhood,
  ZeroVariance,
  TooFewGenerations,
  InitsTooClose,
  WindowTooLarge,
  TraceTooShort,
  MissingMetric,
  InvalidArgument,
  ZeroSignal,
  SampleRateMismatch,
  SignalTooShort,
  UnsupportedEncoding,
  CorruptHeader,
  FormatError,
  IoError,
  ConfigError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::LabelMismatch: return "LabelMismatch";
    case ErrorCode::MissingLabels: return "MissingLabels";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NotSymmetric: return "NotSymmetric";
    case ErrorCode::NotPositiveSemidefinite: return "NotPositiveSemidefinite";
    case ErrorCode::DecompositionFailure: return "DecompositionFailure";
    case ErrorCode::SpectralRadiusTooLarge: return "SpectralRadiusTooLarge";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::DegenerateNeighborhood: return "DegenerateNeighborhood";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::TooFewGenerations: return "TooFewGenerations";
    case ErrorCode::InitsTooClose: return "InitsTooClose";
    case ErrorCode::WindowTooLarge: return "WindowTooLarge";
    case ErrorCode::TraceTooShort: return "TraceTooShort";
    case ErrorCode::MissingMetric: return "MissingMetric";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ZeroSignal: return "ZeroSignal";
    case ErrorCode::SampleRateMismatch: return "SampleRateMismatch";
    case ErrorCode::SignalTooShort: return "SignalTooShort";
    case ErrorCode::UnsupportedEncoding: return "UnsupportedEncoding";
    case ErrorCode::CorruptHeader: return "CorruptHeader";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

/// Library-wide exception. `code()` identifies the failure class; the message
/// carries context such as the metric name, generation index, line or byte offset.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  /// Returns a copy whose message is prefixed with `context: `.
  Error with_context(std::string_view context) const {
    return Error(code_, std::string(context) + ": " + what());
  }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace gmc
