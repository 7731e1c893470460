#include "rocerf/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "rocerf/error.hpp"
#include "rocerf/io.hpp"
#include "rocerf/rng.hpp"

namespace rocerf {
namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

bool is_missing(const std::string& cell) {
  return cell.empty() || cell == "?" || cell == "NA" || cell == "nan" ||
         cell == "NaN";
}

std::optional<double> parse_double(const std::string& cell) {
  double value = 0.0;
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  if (begin != end && *begin == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end || !std::isfinite(value)) return std::nullopt;
  return value;
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::string current;
  std::istringstream in(text);
  while (std::getline(in, current)) {
    if (!current.empty() && current.back() == '\r') current.pop_back();
    lines.push_back(current);
  }
  return lines;
}

std::vector<std::size_t> complement(std::size_t n, std::span<const std::size_t> removed) {
  std::vector<std::size_t> kept;
  kept.reserve(n);
  std::size_t r = 0;
  for (std::size_t i = 0; i < n; ++i) {
    while (r < removed.size() && removed[r] < i) ++r;
    if (r < removed.size() && removed[r] == i) continue;
    kept.push_back(i);
  }
  return kept;
}

}  // namespace

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(trim(field));
      field.clear();
    } else {
      field.push_back(c);
    }
  }
  fields.push_back(trim(field));
  return fields;
}

Schema parse_schema(const std::string& text, const std::string& origin) {
  Schema schema;
  std::size_t line_no = 0;
  for (const std::string& raw_line : split_lines(text)) {
    ++line_no;
    const std::string line = trim(raw_line);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorKind::kSchemaMismatch,
                  origin + ":" + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (key == "positive_label") {
      schema.positive_label = value;
    } else if (key.rfind("column.", 0) == 0) {
      ColumnSpec column;
      column.name = key.substr(7);
      if (value == "numeric") {
        column.kind = ColumnKind::kNumeric;
      } else if (value == "categorical") {
        column.kind = ColumnKind::kCategorical;
      } else if (value == "label") {
        column.kind = ColumnKind::kLabel;
        if (!schema.label_column.empty()) {
          throw Error(ErrorKind::kSchemaMismatch, origin + ": more than one label column");
        }
        schema.label_column = column.name;
      } else {
        throw Error(ErrorKind::kSchemaMismatch, origin + ":" + std::to_string(line_no) +
                                                    ": unknown column kind '" + value + "'");
      }
      schema.columns.push_back(column);
    } else {
      throw Error(ErrorKind::kSchemaMismatch,
                  origin + ":" + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
  }
  if (schema.label_column.empty()) {
    throw Error(ErrorKind::kSchemaMismatch, origin + ": no label column");
  }
  if (schema.positive_label.empty()) {
    throw Error(ErrorKind::kSchemaMismatch, origin + ": positive_label not set");
  }
  return schema;
}

Schema load_schema(const std::filesystem::path& path) {
  return parse_schema(read_file(path), path.string());
}

RawDataset parse_csv(const std::string& text, const Schema& schema,
                     const std::string& origin) {
  const std::vector<std::string> lines = split_lines(text);
  if (lines.empty()) throw Error(ErrorKind::kSchemaMismatch, origin + ": empty file");
  const std::vector<std::string> header = split_csv_line(lines[0]);

  std::map<std::string, std::size_t> position;
  for (std::size_t c = 0; c < header.size(); ++c) position[header[c]] = c;

  RawDataset raw;
  std::vector<std::size_t> numeric_cols, categorical_cols;
  std::size_t label_col = 0;
  for (const ColumnSpec& column : schema.columns) {
    auto it = position.find(column.name);
    if (it == position.end()) {
      throw Error(ErrorKind::kSchemaMismatch,
                  origin + ": column '" + column.name + "' absent from header");
    }
    switch (column.kind) {
      case ColumnKind::kNumeric:
        numeric_cols.push_back(it->second);
        raw.numeric_names.push_back(column.name);
        break;
      case ColumnKind::kCategorical:
        categorical_cols.push_back(it->second);
        raw.categorical_names.push_back(column.name);
        break;
      case ColumnKind::kLabel:
        label_col = it->second;
        break;
    }
  }

  std::vector<std::vector<double>> numeric_rows;
  std::set<std::string> label_values;
  for (std::size_t line_no = 1; line_no < lines.size(); ++line_no) {
    if (trim(lines[line_no]).empty()) continue;
    const std::vector<std::string> fields = split_csv_line(lines[line_no]);
    const std::string where = origin + ": row " + std::to_string(line_no + 1);
    if (fields.size() != header.size()) {
      throw Error(ErrorKind::kSchemaMismatch,
                  where + ": expected " + std::to_string(header.size()) + " fields, got " +
                      std::to_string(fields.size()));
    }
    bool missing = is_missing(fields[label_col]);
    for (std::size_t c : numeric_cols) missing = missing || is_missing(fields[c]);
    for (std::size_t c : categorical_cols) missing = missing || is_missing(fields[c]);
    if (missing) {
      ++raw.dropped_rows;
      continue;
    }
    std::vector<double> numeric_row;
    numeric_row.reserve(numeric_cols.size());
    for (std::size_t c : numeric_cols) {
      auto value = parse_double(fields[c]);
      if (!value) {
        throw Error(ErrorKind::kSchemaMismatch, where + ", column '" + header[c] +
                                                    "': not a number: '" + fields[c] + "'");
      }
      numeric_row.push_back(*value);
    }
    numeric_rows.push_back(std::move(numeric_row));
    std::vector<std::string> categorical_row;
    for (std::size_t c : categorical_cols) categorical_row.push_back(fields[c]);
    raw.categorical.push_back(std::move(categorical_row));
    label_values.insert(fields[label_col]);
    raw.labels.push_back(fields[label_col] == schema.positive_label ? 1 : -1);
  }

  if (label_values.size() > 2) {
    throw Error(ErrorKind::kSchemaMismatch,
                origin + ": label column '" + schema.label_column + "' has " +
                    std::to_string(label_values.size()) + " distinct values");
  }
  if (label_values.size() < 2) {
    throw Error(ErrorKind::kDegenerateLabels,
                origin + ": label column '" + schema.label_column + "' has fewer than two classes");
  }
  if (!label_values.contains(schema.positive_label)) {
    throw Error(ErrorKind::kDegenerateLabels,
                origin + ": positive label '" + schema.positive_label + "' never occurs");
  }

  raw.numeric.resize(static_cast<Eigen::Index>(numeric_rows.size()),
                     static_cast<Eigen::Index>(numeric_cols.size()));
  for (std::size_t r = 0; r < numeric_rows.size(); ++r) {
    for (std::size_t c = 0; c < numeric_cols.size(); ++c) {
      raw.numeric(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = numeric_rows[r][c];
    }
  }
  return raw;
}

RawDataset load_csv(const std::filesystem::path& path, const Schema& schema) {
  return parse_csv(read_file(path), schema, path.string());
}

RawDataset RawDataset::subset(std::span<const std::size_t> indices) const {
  RawDataset out;
  out.numeric_names = numeric_names;
  out.categorical_names = categorical_names;
  out.numeric.resize(static_cast<Eigen::Index>(indices.size()), numeric.cols());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    out.numeric.row(static_cast<Eigen::Index>(r)) = numeric.row(static_cast<Eigen::Index>(indices[r]));
    out.categorical.push_back(categorical[indices[r]]);
    out.labels.push_back(labels[indices[r]]);
  }
  return out;
}

void Dataset::validate() const {
  if (labels.size() != n()) {
    throw Error(ErrorKind::kSizeMismatch, "labels and feature rows differ in count");
  }
  if (feature_names.size() != d()) {
    throw Error(ErrorKind::kSizeMismatch, "feature_names and feature columns differ in count");
  }
  for (int y : labels) {
    if (y != 1 && y != -1) throw Error(ErrorKind::kDegenerateLabels, "label outside {-1,+1}");
  }
  if (!features.allFinite()) {
    throw Error(ErrorKind::kSchemaMismatch, "features contain NaN or Inf");
  }
}

bool Dataset::has_both_classes() const {
  bool pos = false, neg = false;
  for (int y : labels) (y > 0 ? pos : neg) = true;
  return pos && neg;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.features.resize(static_cast<Eigen::Index>(indices.size()), features.cols());
  out.labels.reserve(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    out.features.row(static_cast<Eigen::Index>(r)) = features.row(static_cast<Eigen::Index>(indices[r]));
    out.labels.push_back(labels[indices[r]]);
  }
  out.feature_names = feature_names;
  out.bias_column = bias_column;
  return out;
}

Dataset Dataset::without(std::span<const std::size_t> removed) const {
  const std::vector<std::size_t> kept = complement(n(), removed);
  return subset(kept);
}

Preprocessor Preprocessor::fit(const RawDataset& train, bool append_bias) {
  if (train.rows() == 0) throw Error(ErrorKind::kEmptyTrainingSet, "training split is empty");
  Preprocessor p;
  p.append_bias = append_bias;
  p.numeric_names = train.numeric_names;
  p.categorical_names = train.categorical_names;
  const auto n = static_cast<double>(train.rows());
  p.numeric_means = train.numeric.colwise().sum().transpose() / n;
  p.numeric_stddevs.resize(p.numeric_means.size());
  for (Eigen::Index c = 0; c < p.numeric_means.size(); ++c) {
    const double var =
        (train.numeric.col(c).array() - p.numeric_means(c)).square().sum() / n;
    p.numeric_stddevs(c) = std::max(std::sqrt(var), kStddevFloor);
  }
  p.categories.resize(train.categorical_names.size());
  for (std::size_t c = 0; c < train.categorical_names.size(); ++c) {
    std::set<std::string> seen;
    for (const auto& row : train.categorical) seen.insert(row[c]);
    p.categories[c].assign(seen.begin(), seen.end());
  }
  return p;
}

std::size_t Preprocessor::output_dim() const {
  std::size_t d = numeric_names.size();
  for (const auto& cats : categories) d += cats.size();
  return d + (append_bias ? 1 : 0);
}

std::vector<std::string> Preprocessor::feature_names() const {
  std::vector<std::string> names = numeric_names;
  for (std::size_t c = 0; c < categorical_names.size(); ++c) {
    for (const std::string& cat : categories[c]) names.push_back(categorical_names[c] + "=" + cat);
  }
  if (append_bias) names.emplace_back(kBiasColumnName);
  return names;
}

Dataset Preprocessor::apply(const RawDataset& raw) const {
  if (raw.numeric_names != numeric_names || raw.categorical_names != categorical_names) {
    throw Error(ErrorKind::kSchemaMismatch, "raw dataset columns differ from the fitted schema");
  }
  Dataset out;
  const auto n = static_cast<Eigen::Index>(raw.rows());
  out.features = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(output_dim()));
  const auto num = static_cast<Eigen::Index>(numeric_names.size());
  for (Eigen::Index c = 0; c < num; ++c) {
    out.features.col(c) =
        (raw.numeric.col(c).array() - numeric_means(c)) / numeric_stddevs(c);
  }
  Eigen::Index offset = num;
  for (std::size_t c = 0; c < categorical_names.size(); ++c) {
    const auto& cats = categories[c];
    for (Eigen::Index r = 0; r < n; ++r) {
      const std::string& value = raw.categorical[static_cast<std::size_t>(r)][c];
      auto it = std::lower_bound(cats.begin(), cats.end(), value);
      if (it != cats.end() && *it == value) out.features(r, offset + (it - cats.begin())) = 1.0;
    }
    offset += static_cast<Eigen::Index>(cats.size());
  }
  if (append_bias) {
    out.features.col(offset).setOnes();
    out.bias_column = static_cast<std::size_t>(offset);
  }
  out.labels = raw.labels;
  out.feature_names = feature_names();
  out.validate();
  return out;
}

Eigen::VectorXd Preprocessor::inverse_numeric(const Eigen::VectorXd& standardized_row) const {
  const auto num = numeric_means.size();
  return (standardized_row.head(num).array() * numeric_stddevs.array() + numeric_means.array())
      .matrix();
}

Preprocessed fit_apply_preprocess(const RawDataset& train, std::span<const RawDataset> others,
                                  bool append_bias) {
  Preprocessed out{Preprocessor::fit(train, append_bias), {}, {}};
  out.train = out.preprocessor.apply(train);
  for (const RawDataset& other : others) out.others.push_back(out.preprocessor.apply(other));
  return out;
}

SplitIndices split_indices(std::span<const int> labels, const SplitSpec& spec) {
  const double fractions[] = {spec.train_fraction, spec.val_fraction, spec.test_fraction};
  for (double f : fractions) {
    if (!(f > 0.0 && f < 1.0)) {
      throw Error(ErrorKind::kInvalidArgument, "split fractions must lie in (0,1)");
    }
  }
  if (std::abs(spec.train_fraction + spec.val_fraction + spec.test_fraction - 1.0) > 1e-9) {
    throw Error(ErrorKind::kInvalidArgument, "split fractions must sum to 1");
  }
  const std::size_t n = labels.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(spec.seed);
  rng.shuffle(order);

  const auto n_train = static_cast<std::size_t>(std::llround(spec.train_fraction * static_cast<double>(n)));
  const auto n_val = std::min(n - std::min(n, n_train),
                              static_cast<std::size_t>(std::llround(spec.val_fraction * static_cast<double>(n))));
  if (n_train == 0 || n_val == 0 || n_train + n_val >= n) {
    throw Error(ErrorKind::kDegenerateSplit,
                "dataset of " + std::to_string(n) + " rows yields an empty split");
  }
  SplitIndices out;
  out.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                 order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  out.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  bool pos = false, neg = false;
  for (std::size_t i : out.train) (labels[i] > 0 ? pos : neg) = true;
  if (!(pos && neg)) throw Error(ErrorKind::kDegenerateSplit, "training split has a single class");
  return out;
}

std::array<Dataset, 3> split(const Dataset& dataset, const SplitSpec& spec) {
  const SplitIndices idx = split_indices(dataset.labels, spec);
  return {dataset.subset(idx.train), dataset.subset(idx.val), dataset.subset(idx.test)};
}

std::array<RawDataset, 3> split(const RawDataset& dataset, const SplitSpec& spec) {
  const SplitIndices idx = split_indices(dataset.labels, spec);
  return {dataset.subset(idx.train), dataset.subset(idx.val), dataset.subset(idx.test)};
}

Dataset make_synthetic_gaussians(std::size_t n_per_class, std::size_t d, double separation,
                                 std::uint64_t seed) {
  if (n_per_class == 0 || d == 0 || !(separation >= 0.0)) {
    throw Error(ErrorKind::kInvalidArgument, "make_synthetic_gaussians: invalid arguments");
  }
  Rng rng(seed);
  const double shift = separation / 2.0;
  Dataset out;
  out.features.resize(static_cast<Eigen::Index>(2 * n_per_class), static_cast<Eigen::Index>(d));
  for (std::size_t r = 0; r < 2 * n_per_class; ++r) {
    const int y = (r % 2 == 0) ? 1 : -1;
    for (std::size_t c = 0; c < d; ++c) {
      out.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rng.normal();
    }
    out.features(static_cast<Eigen::Index>(r), 0) += y * shift;
    out.labels.push_back(y);
  }
  for (std::size_t c = 0; c < d; ++c) out.feature_names.push_back("x" + std::to_string(c));
  return out;
}

Dataset with_bias_column(const Dataset& dataset) {
  if (dataset.bias_column) return dataset;
  Dataset out = dataset;
  out.features.conservativeResize(Eigen::NoChange, dataset.features.cols() + 1);
  out.features.col(dataset.features.cols()).setOnes();
  out.feature_names.emplace_back(kBiasColumnName);
  out.bias_column = dataset.d();
  return out;
}

void write_dataset_csv(const std::filesystem::path& path, const Dataset& dataset) {
  std::ostringstream out;
  out.precision(17);
  for (const std::string& name : dataset.feature_names) out << name << ',';
  out << "label\n";
  for (std::size_t r = 0; r < dataset.n(); ++r) {
    for (std::size_t c = 0; c < dataset.d(); ++c) {
      out << dataset.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) << ',';
    }
    out << dataset.labels[r] << '\n';
  }
  write_file_atomic(path, out.str());
}

Dataset read_dataset_csv(const std::filesystem::path& path) {
  const std::vector<std::string> lines = split_lines(read_file(path));
  if (lines.empty()) throw Error(ErrorKind::kSchemaMismatch, path.string() + ": empty file");
  std::vector<std::string> header = split_csv_line(lines[0]);
  if (header.size() < 2 || header.back() != "label") {
    throw Error(ErrorKind::kSchemaMismatch, path.string() + ": last column must be 'label'");
  }
  header.pop_back();
  Dataset out;
  out.feature_names = header;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == kBiasColumnName) out.bias_column = c;
  }
  std::vector<std::vector<double>> rows;
  for (std::size_t line_no = 1; line_no < lines.size(); ++line_no) {
    if (trim(lines[line_no]).empty()) continue;
    const std::vector<std::string> fields = split_csv_line(lines[line_no]);
    if (fields.size() != header.size() + 1) {
      throw Error(ErrorKind::kSchemaMismatch,
                  path.string() + ": row " + std::to_string(line_no + 1) + ": wrong field count");
    }
    std::vector<double> row;
    for (std::size_t c = 0; c < header.size(); ++c) {
      auto value = parse_double(fields[c]);
      if (!value) {
        throw Error(ErrorKind::kSchemaMismatch, path.string() + ": row " +
                                                    std::to_string(line_no + 1) + ", column '" +
                                                    header[c] + "': not a number");
      }
      row.push_back(*value);
    }
    rows.push_back(std::move(row));
    const std::string& label = fields.back();
    if (label != "1" && label != "-1" && label != "+1") {
      throw Error(ErrorKind::kDegenerateLabels,
                  path.string() + ": row " + std::to_string(line_no + 1) + ": label not in {-1,+1}");
    }
    out.labels.push_back(label == "-1" ? -1 : 1);
  }
  out.features.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(header.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < header.size(); ++c) {
      out.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
  }
  out.validate();
  return out;
}

}  // namespace rocerf
