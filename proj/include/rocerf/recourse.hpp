#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rocerf/error.hpp"
#include "rocerf/models.hpp"
#include "rocerf/unlearn.hpp"

namespace rocerf {

// phi(z) = max(z, 0)^2
inline double penalty(double z) { return z > 0.0 ? z * z : 0.0; }

struct InnerSettings {
  std::size_t max_steps = 1000;
  double tol = 1e-6;
  double initial_step = 1.0;
  std::size_t max_halvings = 60;
  // Sufficient-decrease constant c: a trial point is accepted when
  // J(trial) <= J(x) - c * g.(x - trial). c = 0 accepts any decrease.
  double armijo = 0.3;
};

// Which coordinates may move and where.
struct FeatureDomain {
  std::vector<std::size_t> fixed;
  std::optional<Eigen::VectorXd> lower;
  std::optional<Eigen::VectorXd> upper;

  void project(Eigen::VectorXd& x) const;
  void mask_gradient(Eigen::VectorXd& g) const;
};

struct ConstraintValue {
  double value = 0.0;
  Eigen::VectorXd gradient;
};
using ConstraintFn = std::function<ConstraintValue(const Eigen::VectorXd&)>;

// J(x) = lambda * phi(target - c(x)) + sqrt(|x - x0|^2 + eps)
struct PenaltyObjective {
  ConstraintFn constraint;
  Eigen::VectorXd x0;
  double lambda = 0.0;
  double target = 0.0;
  double eps = 1e-12;

  double value(const Eigen::VectorXd& x) const;
  double value_and_gradient(const Eigen::VectorXd& x, Eigen::VectorXd& gradient) const;
};

struct InnerResult {
  Eigen::VectorXd x;
  double objective = 0.0;
  std::size_t steps = 0;
  bool converged = false;
};

// Gradient descent with step halving until the objective decreases enough. The trial
// step restarts at min(2 * last accepted step, initial_step). Returns the best
// iterate seen.
InnerResult inner_minimize(const PenaltyObjective& objective, const Eigen::VectorXd& x_start,
                           const InnerSettings& settings, const FeatureDomain& domain = {});

struct RocerfConfig {
  std::size_t k = 0;
  double delta = 0.0;
  std::size_t T = 20;
  InnerSettings inner;
  double lambda_init = 0.1;
  std::size_t doubling_cap = 60;
  // The penalty aims at delta + margin while feasibility is still judged
  // against delta. With margin 0 the penalized minimizer sits strictly below
  // the target for every finite lambda.
  double penalty_margin = 1e-4;
  double eps = 1e-12;
  FeatureDomain domain;
};

struct SearchStep {
  double lambda_left = 0.0;
  double lambda_right = 0.0;
  double lambda_mid = 0.0;
  bool mid_feasible = false;
};

struct CfeResult {
  Eigen::VectorXd x0;
  Eigen::VectorXd x_cf;
  double cost_l2 = 0.0;
  double cost_l1 = 0.0;
  bool feasible = false;
  double constraint_value = 0.0;
  double threshold = 0.0;
  std::size_t iterations = 0;        // inner descent steps, all solves
  std::size_t outer_iterations = 0;  // inner solves
  double lambda_final = 0.0;
  std::vector<SearchStep> trace;
  std::optional<ErrorKind> error;
  std::string message;
};

// Minimizes |x - x0| subject to f(x) >= 0 with the same machinery as rocerf
// (k = 0, delta = 0). Throws NotNegativeSample.
CfeResult scfe(const Classifier& model, const Eigen::VectorXd& x0, const RocerfConfig& cfg = {});

// Minimizes |x - x0| subject to f_A^(k)(x) >= delta by the penalty method with
// the lambda search of the reference algorithm. k = 0 runs exactly the scfe
// path. Throws NotNegativeSample; an unreachable constraint is reported as
// feasible = false with error = Infeasible.
CfeResult rocerf(const Classifier& model, const InfluenceCache& cache, const Eigen::VectorXd& x0,
                 const RocerfConfig& cfg);

// Penalty search against an arbitrary constraint c(x) >= threshold.
CfeResult penalty_search(const ConstraintFn& constraint, const Eigen::VectorXd& x0,
                         double threshold, const RocerfConfig& cfg);

enum class Method { kScfe, kRocerf };
std::string method_name(Method method);

// One result per input, in order. A failing sample carries its error and the
// unchanged x0; the batch itself does not throw.
std::vector<CfeResult> batch_explain(const Classifier& model, const InfluenceCache* cache,
                                     const std::vector<Eigen::VectorXd>& negatives, Method method,
                                     const RocerfConfig& cfg, std::size_t workers = 0);
std::vector<CfeResult> batch_explain(
    const std::vector<Eigen::VectorXd>& inputs,
    const std::function<CfeResult(const Eigen::VectorXd&)>& explain, std::size_t workers = 0);

CfeResult failed_result(const Eigen::VectorXd& x0, const Error& error);

// sample_id,method,feasible,cost_l2,cost_l1,constraint_value,iterations.
// sample_id is ids[i] when ids is given, else the position.
std::string cfe_results_csv(const std::vector<CfeResult>& results, const std::string& method,
                            std::span<const std::size_t> ids = {});

}  // namespace rocerf
