#include "rocerf/error.hpp"

namespace rocerf {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "InvalidArgument";
    case ErrorKind::kMissingFile: return "MissingFile";
    case ErrorKind::kSchemaMismatch: return "SchemaMismatch";
    case ErrorKind::kDegenerateLabels: return "DegenerateLabels";
    case ErrorKind::kEmptyTrainingSet: return "EmptyTrainingSet";
    case ErrorKind::kDegenerateSplit: return "DegenerateSplit";
    case ErrorKind::kNonConvergence: return "NonConvergence";
    case ErrorKind::kDimensionMismatch: return "DimensionMismatch";
    case ErrorKind::kIndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::kNotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorKind::kCgNonConvergence: return "CgNonConvergence";
    case ErrorKind::kDivergedLoss: return "DivergedLoss";
    case ErrorKind::kSizeMismatch: return "SizeMismatch";
    case ErrorKind::kKTooLarge: return "KTooLarge";
    case ErrorKind::kNotNegativeSample: return "NotNegativeSample";
    case ErrorKind::kInfeasible: return "Infeasible";
    case ErrorKind::kCombinatoricsTooLarge: return "CombinatoricsTooLarge";
    case ErrorKind::kUnpairedResults: return "UnpairedResults";
    case ErrorKind::kCorruptFile: return "CorruptFile";
    case ErrorKind::kConfigError: return "ConfigError";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message),
      kind_(kind),
      detail_(message) {}

}  // namespace rocerf
