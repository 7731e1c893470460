#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "rocerf/models.hpp"
#include "rocerf/recourse.hpp"

namespace rocerf {

struct SurrogateSettings {
  std::size_t n_perturb = 10000;
  // N(0, 0.1) read as variance 0.1; noise_is_variance = false uses 0.1 as the
  // standard deviation instead.
  double noise = 0.1;
  bool noise_is_variance = true;
  // L2 strength of the local fit; unset means 1 / n_perturb.
  std::optional<double> gamma;
  // L2 strength of the influence Hessian over the training points; unset
  // means 1 / n_train.
  std::optional<double> influence_gamma;
  std::uint64_t seed = 0;
  // Coordinates that are never perturbed (e.g. a bias column).
  std::vector<std::size_t> fixed;
  double fidelity_floor = 0.8;
  // Far from the boundary every perturbation lands in one class. The noise is
  // doubled and the set redrawn up to this many times before giving up.
  std::size_t max_widenings = 6;

  double noise_stddev() const;
};

// Logistic fit to the black-box signs around a point, f(x) = theta.x + b.
struct LocalSurrogate {
  Eigen::VectorXd theta_local;
  double intercept = 0.0;
  Eigen::VectorXd center;
  double fit_accuracy = 0.0;
  bool low_fidelity = false;
  std::size_t n_perturb = 0;
  // Effective stddev after any widening.
  double noise_stddev = 0.0;
  std::size_t widenings = 0;

  // Weights over [x; 1].
  Eigen::VectorXd augmented_theta() const;
  double score(const Eigen::VectorXd& x) const;
};

// Throws DegenerateLabels when every perturbation falls in one class even
// after the allowed widenings.
LocalSurrogate fit_local_surrogate(const Classifier& blackbox, const Eigen::VectorXd& x0,
                                   const SurrogateSettings& settings);

struct SurrogateCfe {
  CfeResult result;
  LocalSurrogate surrogate;
};

// Fits a surrogate at x0 and runs the linear penalty search on it, with the
// deletion influence of every training point evaluated at the surrogate's
// parameters. k = 0 gives SCFE on the surrogate. Throws NotNegativeSample when
// the black box is not negative at x0.
SurrogateCfe rocerf_via_surrogate(const Classifier& blackbox, const Dataset& train,
                                  const Eigen::VectorXd& x0, const RocerfConfig& cfg,
                                  const SurrogateSettings& settings);

}  // namespace rocerf
