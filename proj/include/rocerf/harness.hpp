#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "rocerf/data.hpp"
#include "rocerf/models.hpp"
#include "rocerf/recourse.hpp"
#include "rocerf/unlearn.hpp"

namespace rocerf {

// Test rows the model labels -1.
std::vector<std::size_t> negative_indices(const Classifier& model, const Dataset& data);
std::vector<Eigen::VectorXd> rows_of(const Dataset& data, const std::vector<std::size_t>& indices);

struct MethodCfes {
  std::string method;
  std::vector<CfeResult> results;
};

struct TrialSpec {
  double alpha = 0.01;
  std::size_t M = 100;
  std::uint64_t seed = 0;
  TrainConfig train_config = LogRegConfig{};
  std::size_t max_retries = 10;
  std::size_t workers = 0;

  // ceil(alpha * n), at least 1.
  std::size_t removal_count(std::size_t n) const;
};

struct MethodAlphaStats {
  std::string method;
  double alpha = 0.0;
  std::size_t removals = 0;
  std::vector<double> validity;  // one entry per trial
  double validity_mean = 0.0;
  double validity_se = 0.0;  // standard error of the mean, ddof = 1
  double cost_l2_mean = 0.0;
  double cost_l2_se = 0.0;
  double cost_l1_mean = 0.0;
  double cost_l1_se = 0.0;
  std::size_t samples = 0;
  std::size_t failed_samples = 0;  // generation errors; costs exclude them
};

struct EvalReport {
  std::vector<MethodAlphaStats> rows;
  std::size_t retrains = 0;
  std::size_t resampled_masks = 0;

  void append(const EvalReport& other);
  const MethodAlphaStats* find(const std::string& method, double alpha) const;
};

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};
MeanSe mean_and_se(const std::vector<double>& values);

// x is valid for a model when f(x) >= 0.
inline bool is_valid(const Classifier& model, const Eigen::VectorXd& x) { return score(model, x) >= 0.0; }

// M random removals of ceil(alpha n) training rows; each trial retrains and
// scores every method's counterfactuals. Trial m's mask depends only on
// (spec.seed, m); degenerate removals are redrawn up to max_retries times.
EvalReport run_removal_trials(const Dataset& train, const TrialSpec& spec,
                              const std::vector<MethodCfes>& methods);

std::string eval_report_csv(const EvalReport& report);
std::string eval_report_json(const EvalReport& report, const std::string& provenance_json = "{}");

struct OracleMethodResult {
  std::string method;
  double worst_validity = 1.0;
  std::vector<std::size_t> witness;  // mask attaining the worst validity
};

struct OracleReport {
  std::size_t k = 0;
  std::size_t retrains = 0;
  std::size_t skipped_masks = 0;  // single-class survivors
  std::vector<OracleMethodResult> methods;
};

// Number of k-subsets of n, saturating at UINT64_MAX.
std::uint64_t binomial(std::size_t n, std::size_t k);

// Retrains on every k-subset removal and reports each method's worst-case
// validity. Throws CombinatoricsTooLarge when C(n, k) exceeds the cap.
OracleReport exhaustive_validity_oracle(const Dataset& train, std::size_t k,
                                        const std::vector<MethodCfes>& methods,
                                        const TrainConfig& train_config,
                                        std::uint64_t cap = 20000, std::size_t workers = 0);

struct DeltaEstimate {
  double delta = 0.0;
  double max_error = 0.0;  // before clamping and the safety factor
  std::size_t simulations = 0;  // random k-removals
  std::size_t adversarial = 0;  // distinct bottom-k removals of the validation rows
};

// Largest observed overestimate f~_w(x) - f_w(x) over the validation rows,
// clamped at 0 and scaled by the safety factor. The removals are n_sim random
// k-subsets plus, for every validation row, the k-subset its robust score
// selects.
DeltaEstimate estimate_delta(const Dataset& train, const std::vector<Eigen::VectorXd>& validation,
                             const Classifier& model, const InfluenceCache& cache,
                             const TrainConfig& train_config, std::size_t k, std::size_t n_sim,
                             std::uint64_t seed, double safety_factor = 1.5,
                             std::size_t workers = 0);

struct CostBoundReport {
  std::vector<double> extra_cost;  // cost_rocerf - cost_scfe per usable pair
  std::vector<double> implied_c;   // extra_cost * n * |theta| / k
  double mean_extra_cost = 0.0;
  double mean_implied_c = 0.0;
  double max_implied_c = 0.0;
  std::size_t pairs = 0;
  std::size_t excluded = 0;  // pairs where either side is infeasible
};

// Throws UnpairedResults unless both lists share the same x0 sequence.
CostBoundReport cost_bound_check(const std::vector<CfeResult>& scfe_results,
                                 const std::vector<CfeResult>& rocerf_results,
                                 const Classifier& model, std::size_t k, std::size_t n);

struct SweepReport {
  std::vector<std::size_t> k_values;
  std::vector<double> alphas;
  std::vector<std::vector<double>> validity;  // [k][alpha]
  bool pattern_holds = true;
  std::vector<std::string> violations;
  EvalReport trials;
};

// cfes_per_k[i] are the counterfactuals generated with k_values[i]. Each alpha
// runs one set of trials shared by every k.
SweepReport k_sensitivity_sweep(const Dataset& train, const std::vector<std::size_t>& k_values,
                                const std::vector<double>& alphas,
                                const std::vector<std::vector<CfeResult>>& cfes_per_k,
                                const TrialSpec& base, double tolerance = 0.02);

}  // namespace rocerf
