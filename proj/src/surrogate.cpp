#include "rocerf/surrogate.hpp"

#include <cmath>

#include "rocerf/error.hpp"
#include "rocerf/io.hpp"
#include "rocerf/rng.hpp"
#include "rocerf/unlearn.hpp"

namespace rocerf {
namespace {

Eigen::VectorXd augment(const Eigen::VectorXd& x) {
  Eigen::VectorXd out(x.size() + 1);
  out << x, 1.0;
  return out;
}

Dataset augment(const Dataset& data) {
  Dataset out;
  out.features.resize(data.features.rows(), data.features.cols() + 1);
  out.features << data.features, Eigen::VectorXd::Ones(data.features.rows());
  out.labels = data.labels;
  out.feature_names = data.feature_names;
  out.feature_names.push_back("_intercept");
  out.bias_column = data.d();
  return out;
}

}  // namespace

double SurrogateSettings::noise_stddev() const {
  return noise_is_variance ? std::sqrt(noise) : noise;
}

Eigen::VectorXd LocalSurrogate::augmented_theta() const {
  Eigen::VectorXd out(theta_local.size() + 1);
  out << theta_local, intercept;
  return out;
}

double LocalSurrogate::score(const Eigen::VectorXd& x) const {
  return theta_local.dot(x) + intercept;
}

LocalSurrogate fit_local_surrogate(const Classifier& blackbox, const Eigen::VectorXd& x0,
                                   const SurrogateSettings& settings) {
  const std::size_t d = input_dim(blackbox);
  if (static_cast<std::size_t>(x0.size()) != d) {
    throw Error(ErrorKind::kDimensionMismatch, "x0 length differs from the black box input");
  }
  if (settings.n_perturb < 2 || !(settings.noise > 0.0)) {
    throw Error(ErrorKind::kInvalidArgument, "need n_perturb >= 2 and positive noise");
  }
  std::vector<bool> frozen(d, false);
  for (std::size_t j : settings.fixed) {
    if (j < d) frozen[j] = true;
  }
  double sigma = settings.noise_stddev();
  Rng rng(settings.seed);
  Dataset local;
  local.features.resize(static_cast<Eigen::Index>(settings.n_perturb), static_cast<Eigen::Index>(d + 1));
  local.labels.resize(settings.n_perturb);
  std::size_t widenings = 0;
  Eigen::VectorXd x(d);
  for (;;) {
    std::size_t positives = 0;
    for (std::size_t s = 0; s < settings.n_perturb; ++s) {
      for (std::size_t j = 0; j < d; ++j) {
        const double noise = rng.normal();
        x(static_cast<Eigen::Index>(j)) = x0(static_cast<Eigen::Index>(j)) + (frozen[j] ? 0.0 : sigma * noise);
      }
      local.features.row(static_cast<Eigen::Index>(s)) = augment(x).transpose();
      local.labels[s] = predict(blackbox, x);
      if (local.labels[s] > 0) ++positives;
    }
    if (positives > 0 && positives < settings.n_perturb) break;
    if (widenings == settings.max_widenings) {
      throw Error(ErrorKind::kDegenerateLabels,
                  std::string("every perturbation is classified ") + (positives == 0 ? "-1" : "+1") +
                      " (noise stddev " + format_number(sigma) + " after " + std::to_string(widenings) +
                      " widenings)");
    }
    sigma *= 2.0;
    ++widenings;
  }
  for (std::size_t j = 0; j < d; ++j) local.feature_names.push_back("x" + std::to_string(j));
  local.feature_names.push_back("_intercept");
  local.bias_column = d;

  LogRegConfig config;
  config.gamma = settings.gamma.value_or(1.0 / static_cast<double>(settings.n_perturb));
  const LinearClassifier fit = train_logreg(local, config);

  LocalSurrogate out;
  out.theta_local = fit.theta.head(static_cast<Eigen::Index>(d));
  out.intercept = fit.theta(static_cast<Eigen::Index>(d));
  out.center = x0;
  out.n_perturb = settings.n_perturb;
  out.noise_stddev = sigma;
  out.widenings = widenings;
  std::size_t agree = 0;
  for (std::size_t s = 0; s < settings.n_perturb; ++s) {
    const double f = local.features.row(static_cast<Eigen::Index>(s)).dot(fit.theta);
    if ((f >= 0.0 ? 1 : -1) == local.labels[s]) ++agree;
  }
  out.fit_accuracy = static_cast<double>(agree) / static_cast<double>(settings.n_perturb);
  out.low_fidelity = out.fit_accuracy < settings.fidelity_floor;
  return out;
}

SurrogateCfe rocerf_via_surrogate(const Classifier& blackbox, const Dataset& train,
                                  const Eigen::VectorXd& x0, const RocerfConfig& cfg,
                                  const SurrogateSettings& settings) {
  const double f0 = score(blackbox, x0);
  if (!(f0 < 0.0)) {
    throw Error(ErrorKind::kNotNegativeSample, "black-box score " + format_number(f0) + " at x0 is not negative");
  }
  if (train.d() != input_dim(blackbox)) {
    throw Error(ErrorKind::kDimensionMismatch, "training data width differs from the black box");
  }
  if (cfg.k > train.n()) {
    throw Error(ErrorKind::kKTooLarge,
                "k = " + std::to_string(cfg.k) + " exceeds n = " + std::to_string(train.n()));
  }
  SurrogateCfe out;
  out.surrogate = fit_local_surrogate(blackbox, x0, settings);

  const std::size_t d = train.d();
  LinearClassifier local;
  local.theta = out.surrogate.augmented_theta();
  local.gamma = settings.influence_gamma.value_or(1.0 / static_cast<double>(train.n()));
  const Classifier model = local;

  RocerfConfig aug_cfg = cfg;
  aug_cfg.domain.fixed.push_back(d);
  if (aug_cfg.domain.lower) aug_cfg.domain.lower = augment(*aug_cfg.domain.lower);
  if (aug_cfg.domain.upper) aug_cfg.domain.upper = augment(*aug_cfg.domain.upper);
  const Eigen::VectorXd x0_aug = augment(x0);

  CfeResult r;
  if (cfg.k == 0) {
    ConstraintFn plain = [&model](const Eigen::VectorXd& x) {
      return ConstraintValue{score(model, x), input_gradient(model, x)};
    };
    r = penalty_search(plain, x0_aug, cfg.delta, aug_cfg);
  } else {
    const Dataset train_aug = augment(train);
    const HessianFactor factor =
        HessianFactor::dense(logistic_hessian(local.theta, local.gamma, train_aug), 0.0);
    const InfluenceCache cache = build_influence_cache(model, train_aug, factor);
    const std::size_t k = cfg.k;
    ConstraintFn robust = [&cache, &model, k](const Eigen::VectorXd& x) {
      RobustValueGradient v = robust_value_and_gradient(cache, model, x, k);
      return ConstraintValue{v.value, std::move(v.gradient)};
    };
    r = penalty_search(robust, x0_aug, cfg.delta, aug_cfg);
  }
  r.x0 = x0;
  r.x_cf = r.x_cf.head(static_cast<Eigen::Index>(d)).eval();
  r.cost_l2 = (r.x_cf - x0).norm();
  r.cost_l1 = (r.x_cf - x0).lpNorm<1>();
  out.result = std::move(r);
  return out;
}

}  // namespace rocerf
