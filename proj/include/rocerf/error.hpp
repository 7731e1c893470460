#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rocerf {

enum class ErrorKind {
  kInvalidArgument,
  kMissingFile,
  kSchemaMismatch,
  kDegenerateLabels,
  kEmptyTrainingSet,
  kDegenerateSplit,
  kNonConvergence,
  kDimensionMismatch,
  kIndexOutOfRange,
  kNotPositiveDefinite,
  kCgNonConvergence,
  kDivergedLoss,
  kSizeMismatch,
  kKTooLarge,
  kNotNegativeSample,
  kInfeasible,
  kCombinatoricsTooLarge,
  kUnpairedResults,
  kCorruptFile,
  kConfigError,
};

// Stable identifier used in reports and error JSON, e.g. "SchemaMismatch".
std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);
  ErrorKind kind() const noexcept { return kind_; }
  // Message without the kind prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  std::string detail_;
};

}  // namespace rocerf
