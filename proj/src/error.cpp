#include "qsm/error.hpp"

namespace qsm {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUnsupportedDimension: return "UNSUPPORTED_DIMENSION";
    case ErrorCode::kLmaxTooSmall: return "LMAX_TOO_SMALL";
    case ErrorCode::kGridMismatch: return "GRID_MISMATCH";
    case ErrorCode::kInvalidArgument: return "INVALID_ARGUMENT";
    case ErrorCode::kInsufficientDealiasing: return "INSUFFICIENT_DEALIASING";
    case ErrorCode::kHorizonViolation: return "HORIZON_VIOLATION";
    case ErrorCode::kNonPositiveLapse: return "NON_POSITIVE_LAPSE";
    case ErrorCode::kBlowUpGuard: return "BLOW_UP_GUARD";
    case ErrorCode::kStepUnderflow: return "STEP_UNDERFLOW";
    case ErrorCode::kTooFewStations: return "TOO_FEW_STATIONS";
    case ErrorCode::kStationOutOfRange: return "STATION_OUT_OF_RANGE";
    case ErrorCode::kWindowTooSmall: return "WINDOW_TOO_SMALL";
    case ErrorCode::kRankDeficient: return "RANK_DEFICIENT";
    case ErrorCode::kMissingCoefficients: return "MISSING_COEFFICIENTS";
    case ErrorCode::kNotSymmetric: return "NOT_SYMMETRIC";
    case ErrorCode::kNotScalarFlat: return "NOT_SCALAR_FLAT";
    case ErrorCode::kSingularSystem: return "SINGULAR_SYSTEM";
    case ErrorCode::kNotIntegrable: return "NOT_INTEGRABLE";
    case ErrorCode::kNotEquipotential: return "NOT_EQUIPOTENTIAL";
    case ErrorCode::kNonPositivePotential: return "NON_POSITIVE_POTENTIAL";
    case ErrorCode::kConfigInvalid: return "CONFIG_INVALID";
    case ErrorCode::kSnapshotCorrupt: return "SNAPSHOT_CORRUPT";
    case ErrorCode::kIo: return "IO";
  }
  return "UNKNOWN";
}

}  // namespace qsm
