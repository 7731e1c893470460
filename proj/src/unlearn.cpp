#include "rocerf/unlearn.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <limits>
#include <queue>

#include "rocerf/error.hpp"
#include "rocerf/io.hpp"
#include "rocerf/parallel.hpp"

namespace rocerf {
namespace {

void check_cache(const InfluenceCache& cache, const Classifier& model) {
  if (cache.p() != param_count(model)) {
    throw Error(ErrorKind::kSizeMismatch, "influence cache parameter dimension " +
                                              std::to_string(cache.p()) + " differs from model's " +
                                              std::to_string(param_count(model)));
  }
}

void check_k(std::size_t k, std::size_t n) {
  if (k > n) {
    throw Error(ErrorKind::kKTooLarge,
                "k = " + std::to_string(k) + " exceeds n = " + std::to_string(n));
  }
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
}
void put_u32(std::string& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
}
void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

std::uint64_t get_u64(std::string_view in, std::size_t offset) {
  std::uint64_t v = 0;
  for (int b = 0; b < 8; ++b) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[offset + b])) << (8 * b);
  }
  return v;
}
std::uint32_t get_u32(std::string_view in, std::size_t offset) {
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[offset + b])) << (8 * b);
  }
  return v;
}
double get_f64(std::string_view in, std::size_t offset) {
  return std::bit_cast<double>(get_u64(in, offset));
}

constexpr char kCacheMagic[8] = {'R', 'C', 'F', 'I', 'N', 'F', 'L', '1'};
constexpr std::uint32_t kCacheVersion = 1;
constexpr std::size_t kHeaderBytes = 40;

}  // namespace

RemovalMask::RemovalMask(std::size_t n, std::vector<std::size_t> removed)
    : n_(n), removed_(std::move(removed)) {
  std::sort(removed_.begin(), removed_.end());
  if (std::adjacent_find(removed_.begin(), removed_.end()) != removed_.end()) {
    throw Error(ErrorKind::kInvalidArgument, "removal mask has duplicate indices");
  }
  if (!removed_.empty() && removed_.back() >= n_) {
    throw Error(ErrorKind::kIndexOutOfRange, "removal index " + std::to_string(removed_.back()) +
                                                 " >= n = " + std::to_string(n_));
  }
}

std::vector<double> RemovalMask::weights() const {
  std::vector<double> w(n_, 1.0);
  for (std::size_t i : removed_) w[i] = 0.0;
  return w;
}

InfluenceCache build_influence_cache(const Classifier& model, const Dataset& train,
                                     const HessianFactor& factor) {
  if (factor.dim() != param_count(model)) {
    throw Error(ErrorKind::kSizeMismatch, "Hessian factor dimension differs from the model");
  }
  InfluenceCache cache;
  cache.theta_hat = parameters(model);
  cache.damping = factor.damping();
  cache.vectors.resize(static_cast<Eigen::Index>(train.n()),
                       static_cast<Eigen::Index>(param_count(model)));
  parallel_for(train.n(), [&](std::size_t i) {
    try {
      cache.vectors.row(static_cast<Eigen::Index>(i)) =
          factor.solve(per_sample_gradient(model, train, i)).transpose();
    } catch (const Error& e) {
      throw Error(e.kind(), "influence vector " + std::to_string(i) + ": " + e.detail());
    }
  });
  return cache;
}

Eigen::VectorXd approx_params(const InfluenceCache& cache, const RemovalMask& mask) {
  if (mask.n() != cache.n()) {
    throw Error(ErrorKind::kSizeMismatch, "mask size " + std::to_string(mask.n()) +
                                              " differs from cache size " + std::to_string(cache.n()));
  }
  Eigen::VectorXd shift = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cache.p()));
  for (std::size_t i : mask.removed()) shift += cache.vectors.row(static_cast<Eigen::Index>(i)).transpose();
  return cache.theta_hat + shift / static_cast<double>(cache.n());
}

Eigen::VectorXd influence_set(const InfluenceCache& cache, const Classifier& model,
                              const Eigen::VectorXd& x) {
  check_cache(cache, model);
  return cache.vectors * param_gradient(model, x);
}

double approx_score(const InfluenceCache& cache, const Classifier& model, const RemovalMask& mask,
                    const Eigen::VectorXd& x) {
  check_cache(cache, model);
  if (mask.n() != cache.n()) {
    throw Error(ErrorKind::kSizeMismatch, "mask size differs from cache size");
  }
  const double base = score(model, x);
  if (mask.k() == 0) return base;
  const Eigen::VectorXd beta = param_gradient(model, x);
  double sum = 0.0;
  for (std::size_t i : mask.removed()) sum += cache.vectors.row(static_cast<Eigen::Index>(i)).dot(beta);
  return base + sum / static_cast<double>(cache.n());
}

BottomK bottom_k_sum(std::span<const double> values, std::size_t k) {
  check_k(k, values.size());
  BottomK out;
  out.gap = std::numeric_limits<double>::infinity();
  if (k == 0) return out;
  using Entry = std::pair<double, std::size_t>;
  std::priority_queue<Entry> heap;  // max-heap: top is the worst kept entry
  for (std::size_t i = 0; i < values.size(); ++i) {
    const Entry e{values[i], i};
    if (heap.size() < k) {
      heap.push(e);
    } else if (e < heap.top()) {
      heap.pop();
      heap.push(e);
    }
  }
  const double kth = heap.top().first;
  out.indices.reserve(k);
  while (!heap.empty()) {
    out.indices.push_back(heap.top().second);
    heap.pop();
  }
  std::sort(out.indices.begin(), out.indices.end());
  for (std::size_t i : out.indices) out.sum += values[i];
  if (k < values.size()) {
    double next = std::numeric_limits<double>::infinity();
    std::size_t s = 0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (s < out.indices.size() && out.indices[s] == i) {
        ++s;
        continue;
      }
      next = std::min(next, values[i]);
    }
    out.gap = next - kth;
  }
  return out;
}

RobustEvaluation robust_evaluate(const InfluenceCache& cache, const Classifier& model,
                                 const Eigen::VectorXd& x, std::size_t k) {
  check_cache(cache, model);
  check_k(k, cache.n());
  RobustEvaluation out;
  out.value = score(model, x);
  if (k == 0) {
    out.selection.gap = std::numeric_limits<double>::infinity();
    return out;
  }
  const Eigen::VectorXd a = influence_set(cache, model, x);
  out.selection = bottom_k_sum(std::span<const double>(a.data(), static_cast<std::size_t>(a.size())), k);
  out.value += out.selection.sum / static_cast<double>(cache.n());
  return out;
}

double robust_score(const InfluenceCache& cache, const Classifier& model, const Eigen::VectorXd& x,
                    std::size_t k) {
  return robust_evaluate(cache, model, x, k).value;
}

RobustValueGradient robust_value_and_gradient(const InfluenceCache& cache, const Classifier& model,
                                              const Eigen::VectorXd& x, std::size_t k) {
  RobustEvaluation eval = robust_evaluate(cache, model, x, k);
  RobustValueGradient out;
  out.value = eval.value;
  out.gradient = input_gradient(model, x);
  if (k > 0) {
    Eigen::VectorXd shift = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cache.p()));
    for (std::size_t i : eval.selection.indices) {
      shift += cache.vectors.row(static_cast<Eigen::Index>(i)).transpose();
    }
    shift /= static_cast<double>(cache.n());
    out.gradient += input_gradient_of_param_directional(model, x, shift);
  }
  out.selection = std::move(eval.selection);
  return out;
}

Eigen::VectorXd robust_score_gradient(const InfluenceCache& cache, const Classifier& model,
                                      const Eigen::VectorXd& x, std::size_t k) {
  return robust_value_and_gradient(cache, model, x, k).gradient;
}

Classifier retrain_exact(const Dataset& data, const RemovalMask& mask, const TrainConfig& config) {
  if (mask.n() != data.n()) {
    throw Error(ErrorKind::kSizeMismatch, "mask size differs from training set size");
  }
  const Dataset survivors = data.without(mask.removed());
  if (!survivors.has_both_classes()) {
    throw Error(ErrorKind::kDegenerateLabels, "rows surviving the removal contain a single class");
  }
  return train(survivors, config);
}

TrainConfig training_config_of(const Classifier& model, const LogRegConfig& base) {
  if (const auto* lin = std::get_if<LinearClassifier>(&model)) {
    LogRegConfig config = base;
    config.gamma = lin->gamma;
    return config;
  }
  return std::get<MlpClassifier>(model).config;
}

std::string encode_influence_cache(const InfluenceCache& cache) {
  std::string out;
  out.reserve(kHeaderBytes + 8 * (cache.p() * (cache.n() + 1) + 1));
  out.append(kCacheMagic, sizeof(kCacheMagic));
  put_u32(out, kCacheVersion);
  put_u32(out, 0);
  put_u64(out, cache.n());
  put_u64(out, cache.p());
  put_f64(out, cache.damping);
  for (Eigen::Index j = 0; j < cache.theta_hat.size(); ++j) put_f64(out, cache.theta_hat(j));
  for (Eigen::Index i = 0; i < cache.vectors.rows(); ++i) {
    for (Eigen::Index j = 0; j < cache.vectors.cols(); ++j) put_f64(out, cache.vectors(i, j));
  }
  put_u64(out, fnv1a64(out));
  return out;
}

InfluenceCache decode_influence_cache(std::string_view bytes, const std::string& origin) {
  if (bytes.size() < kHeaderBytes + 8 || std::memcmp(bytes.data(), kCacheMagic, 8) != 0) {
    throw Error(ErrorKind::kCorruptFile, origin + ": not an influence cache file");
  }
  if (get_u32(bytes, 8) != kCacheVersion) {
    throw Error(ErrorKind::kCorruptFile, origin + ": unsupported cache version");
  }
  const std::uint64_t n = get_u64(bytes, 16);
  const std::uint64_t p = get_u64(bytes, 24);
  if (p == 0 || n > (1ULL << 40) || p > (1ULL << 32) ||
      bytes.size() != kHeaderBytes + 8 * (p * (n + 1)) + 8) {
    throw Error(ErrorKind::kCorruptFile, origin + ": size does not match header");
  }
  const std::size_t body = bytes.size() - 8;
  if (fnv1a64(bytes.substr(0, body)) != get_u64(bytes, body)) {
    throw Error(ErrorKind::kCorruptFile, origin + ": cache checksum mismatch");
  }
  InfluenceCache cache;
  cache.damping = get_f64(bytes, 32);
  cache.theta_hat.resize(static_cast<Eigen::Index>(p));
  std::size_t offset = kHeaderBytes;
  for (std::uint64_t j = 0; j < p; ++j, offset += 8) {
    cache.theta_hat(static_cast<Eigen::Index>(j)) = get_f64(bytes, offset);
  }
  cache.vectors.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  for (std::uint64_t i = 0; i < n; ++i) {
    for (std::uint64_t j = 0; j < p; ++j, offset += 8) {
      cache.vectors(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = get_f64(bytes, offset);
    }
  }
  return cache;
}

void save_influence_cache(const std::filesystem::path& path, const InfluenceCache& cache) {
  write_file_atomic(path, encode_influence_cache(cache));
}

InfluenceCache load_influence_cache(const std::filesystem::path& path) {
  return decode_influence_cache(read_file(path), path.string());
}

}  // namespace rocerf
