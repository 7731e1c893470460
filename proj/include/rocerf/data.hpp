#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace rocerf {

enum class ColumnKind { kNumeric, kCategorical, kLabel };

struct ColumnSpec {
  std::string name;
  ColumnKind kind = ColumnKind::kNumeric;
};

// Column descriptors in feature order plus the label mapping. Columns present
// in a CSV but absent from the schema are ignored.
struct Schema {
  std::vector<ColumnSpec> columns;
  std::string label_column;
  std::string positive_label;
};

// Parses the key-value schema format:
//   # comment
//   column.<name> = numeric | categorical | label
//   positive_label = <raw label value>
Schema load_schema(const std::filesystem::path& path);
Schema parse_schema(const std::string& text, const std::string& origin);

// Unstandardized rows as read from a CSV.
struct RawDataset {
  std::vector<std::string> numeric_names;
  std::vector<std::string> categorical_names;
  Eigen::MatrixXd numeric;                            // n x numeric_names.size()
  std::vector<std::vector<std::string>> categorical;  // [row][categorical col]
  std::vector<int> labels;                            // +1 / -1
  std::size_t dropped_rows = 0;

  std::size_t rows() const { return labels.size(); }
  RawDataset subset(std::span<const std::size_t> indices) const;
};

// Standardized design matrix with labels in {-1, +1}.
struct Dataset {
  Eigen::MatrixXd features;  // n x d
  std::vector<int> labels;
  std::vector<std::string> feature_names;
  // Index of the always-one column when one was appended.
  std::optional<std::size_t> bias_column;

  std::size_t n() const { return static_cast<std::size_t>(features.rows()); }
  std::size_t d() const { return static_cast<std::size_t>(features.cols()); }
  Eigen::VectorXd row(std::size_t i) const { return features.row(static_cast<Eigen::Index>(i)).transpose(); }

  // Throws on non {-1,+1} labels, non-finite features or shape mismatch.
  void validate() const;
  bool has_both_classes() const;
  Dataset subset(std::span<const std::size_t> indices) const;
  // Rows whose index is not in `removed` (sorted, unique).
  Dataset without(std::span<const std::size_t> removed) const;
};

inline constexpr const char* kBiasColumnName = "_bias";

RawDataset load_csv(const std::filesystem::path& path, const Schema& schema);
RawDataset parse_csv(const std::string& text, const Schema& schema,
                     const std::string& origin);

class Preprocessor {
 public:
  static Preprocessor fit(const RawDataset& train, bool append_bias = true);

  Dataset apply(const RawDataset& raw) const;
  // Maps the numeric block of a standardized row back to raw units.
  Eigen::VectorXd inverse_numeric(const Eigen::VectorXd& standardized_row) const;

  std::size_t output_dim() const;
  std::vector<std::string> feature_names() const;

  std::vector<std::string> numeric_names;
  Eigen::VectorXd numeric_means;
  Eigen::VectorXd numeric_stddevs;
  std::vector<std::string> categorical_names;
  std::vector<std::vector<std::string>> categories;  // sorted per column
  bool append_bias = true;
};

inline constexpr double kStddevFloor = 1e-8;

struct Preprocessed {
  Preprocessor preprocessor;
  Dataset train;
  std::vector<Dataset> others;
};

Preprocessed fit_apply_preprocess(const RawDataset& train,
                                  std::span<const RawDataset> others,
                                  bool append_bias = true);

struct SplitSpec {
  double train_fraction = 0.7;
  double val_fraction = 0.1;
  double test_fraction = 0.2;
  std::uint64_t seed = 0;
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

SplitIndices split_indices(std::span<const int> labels, const SplitSpec& spec);
std::array<Dataset, 3> split(const Dataset& dataset, const SplitSpec& spec);
std::array<RawDataset, 3> split(const RawDataset& dataset, const SplitSpec& spec);

// Class +1 ~ N(+s e1, I), class -1 ~ N(-s e1, I), s = separation / 2.
// Rows alternate +1, -1, +1, ...
Dataset make_synthetic_gaussians(std::size_t n_per_class, std::size_t d,
                                 double separation, std::uint64_t seed);

// Copy with an always-one column appended (no-op when already present).
Dataset with_bias_column(const Dataset& dataset);

// Standardized CSV: header = feature_names + "label".
void write_dataset_csv(const std::filesystem::path& path, const Dataset& dataset);
Dataset read_dataset_csv(const std::filesystem::path& path);

// Minimal RFC 4180 splitter shared by the readers.
std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace rocerf
