#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "rocerf/data.hpp"
#include "rocerf/models.hpp"

namespace rocerf {

// Deleted training rows; equivalent to w in {0,1}^n with w_i = 0 exactly on
// removed().
class RemovalMask {
 public:
  RemovalMask() = default;
  // Sorts and validates; throws on duplicates or indices >= n.
  RemovalMask(std::size_t n, std::vector<std::size_t> removed);
  static RemovalMask none(std::size_t n) { return RemovalMask(n, {}); }

  std::size_t n() const { return n_; }
  std::size_t k() const { return removed_.size(); }
  const std::vector<std::size_t>& removed() const { return removed_; }
  std::vector<double> weights() const;
  bool operator==(const RemovalMask&) const = default;

 private:
  std::size_t n_ = 0;
  std::vector<std::size_t> removed_;
};

// Row i holds H^{-1} g_i(theta_hat), the first-order parameter shift caused by
// deleting training point i (scaled by 1/n when applied).
struct InfluenceCache {
  Eigen::MatrixXd vectors;  // n x p
  Eigen::VectorXd theta_hat;
  double damping = 0.0;

  std::size_t n() const { return static_cast<std::size_t>(vectors.rows()); }
  std::size_t p() const { return static_cast<std::size_t>(vectors.cols()); }
};

InfluenceCache build_influence_cache(const Classifier& model, const Dataset& train,
                                     const HessianFactor& factor);

// theta_hat + (1/n) sum_{i removed} H^{-1} g_i
Eigen::VectorXd approx_params(const InfluenceCache& cache, const RemovalMask& mask);

// f(x) + (1/n) sum_{i removed} beta(x) . H^{-1} g_i
double approx_score(const InfluenceCache& cache, const Classifier& model,
                    const RemovalMask& mask, const Eigen::VectorXd& x);

// Entry i = beta(x) . H^{-1} g_i.
Eigen::VectorXd influence_set(const InfluenceCache& cache, const Classifier& model,
                              const Eigen::VectorXd& x);

struct BottomK {
  double sum = 0.0;
  std::vector<std::size_t> indices;  // ascending
  // Gap between the (k+1)-th and k-th order statistics; +inf when k is 0 or
  // equals the length. A zero gap marks a selection tie.
  double gap = 0.0;
};

// Sum of the k smallest entries via a bounded max-heap, O(n log k). Ties are
// broken toward the lower index.
BottomK bottom_k_sum(std::span<const double> values, std::size_t k);

struct RobustEvaluation {
  double value = 0.0;
  BottomK selection;
};

// f_A^(k)(x) = f(x) + (1/n) * (sum of the k smallest influence_set entries).
RobustEvaluation robust_evaluate(const InfluenceCache& cache, const Classifier& model,
                                 const Eigen::VectorXd& x, std::size_t k);
double robust_score(const InfluenceCache& cache, const Classifier& model,
                    const Eigen::VectorXd& x, std::size_t k);

// Gradient in x of f_A^(k) with the bottom-k selection held fixed.
Eigen::VectorXd robust_score_gradient(const InfluenceCache& cache, const Classifier& model,
                                      const Eigen::VectorXd& x, std::size_t k);

// Value and gradient from one influence-set evaluation.
struct RobustValueGradient {
  double value = 0.0;
  Eigen::VectorXd gradient;
  BottomK selection;
};
RobustValueGradient robust_value_and_gradient(const InfluenceCache& cache,
                                              const Classifier& model,
                                              const Eigen::VectorXd& x, std::size_t k);

// Trains from scratch on the rows that survive the mask.
Classifier retrain_exact(const Dataset& train, const RemovalMask& mask, const TrainConfig& config);

// Training configuration that reproduces `model` (same family, gamma and seed).
TrainConfig training_config_of(const Classifier& model, const LogRegConfig& base = {});

// Binary cache layout (all integers and floats little-endian):
//   bytes  0..7   magic "RCFINFL1"
//          8..11  u32 format version (1)
//         12..15  u32 reserved (0)
//         16..23  u64 n
//         24..31  u64 p
//         32..39  f64 damping
//         40..    p   x f64 theta_hat
//                 n*p x f64 vectors, row-major (row i = H^{-1} g_i)
//         last 8  u64 FNV-1a-64 of every preceding byte
void save_influence_cache(const std::filesystem::path& path, const InfluenceCache& cache);
InfluenceCache load_influence_cache(const std::filesystem::path& path);
std::string encode_influence_cache(const InfluenceCache& cache);
InfluenceCache decode_influence_cache(std::string_view bytes, const std::string& origin);

}  // namespace rocerf
