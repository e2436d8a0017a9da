#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace qsm {

// Stable machine-readable failure codes. The CLI prints these verbatim.
enum class ErrorCode {
  kUnsupportedDimension,
  kLmaxTooSmall,
  kGridMismatch,
  kInvalidArgument,
  kInsufficientDealiasing,
  kHorizonViolation,
  kNonPositiveLapse,
  kBlowUpGuard,
  kStepUnderflow,
  kTooFewStations,
  kStationOutOfRange,
  kWindowTooSmall,
  kRankDeficient,
  kMissingCoefficients,
  kNotSymmetric,
  kNotScalarFlat,
  kSingularSystem,
  kNotIntegrable,
  kNotEquipotential,
  kNonPositivePotential,
  kConfigInvalid,
  kSnapshotCorrupt,
  kIo,
};

std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace qsm
