#include "rocerf/recourse.hpp"

#include <cmath>
#include <map>
#include <sstream>

#include "rocerf/io.hpp"
#include "rocerf/parallel.hpp"

namespace rocerf {
namespace {

void check_config(const RocerfConfig& cfg) {
  if (!(cfg.lambda_init > 0.0) || !std::isfinite(cfg.lambda_init)) {
    throw Error(ErrorKind::kInvalidArgument, "lambda_init must be positive");
  }
  if (!(cfg.penalty_margin >= 0.0) || !(cfg.eps > 0.0) || !(cfg.delta >= 0.0)) {
    throw Error(ErrorKind::kInvalidArgument,
                "penalty_margin and delta must be >= 0 and eps must be > 0");
  }
  if (cfg.inner.max_steps == 0 || !(cfg.inner.initial_step > 0.0) || !(cfg.inner.tol >= 0.0) ||
      !(cfg.inner.armijo >= 0.0 && cfg.inner.armijo < 1.0)) {
    throw Error(ErrorKind::kInvalidArgument, "invalid inner optimizer settings");
  }
}

ConstraintFn plain_constraint(const Classifier& model) {
  return [&model](const Eigen::VectorXd& x) {
    return ConstraintValue{score(model, x), input_gradient(model, x)};
  };
}

void require_negative(const Classifier& model, const Eigen::VectorXd& x0) {
  const double f = score(model, x0);
  if (!(f < 0.0)) {
    throw Error(ErrorKind::kNotNegativeSample,
                "score " + format_number(f) + " at x0 is not negative");
  }
}

struct Solve {
  Eigen::VectorXd x;
  double constraint = 0.0;
  bool feasible = false;
};

}  // namespace

void FeatureDomain::project(Eigen::VectorXd& x) const {
  if (lower) x = x.cwiseMax(*lower);
  if (upper) x = x.cwiseMin(*upper);
}

void FeatureDomain::mask_gradient(Eigen::VectorXd& g) const {
  for (std::size_t j : fixed) {
    if (j < static_cast<std::size_t>(g.size())) g(static_cast<Eigen::Index>(j)) = 0.0;
  }
}

double PenaltyObjective::value(const Eigen::VectorXd& x) const {
  const ConstraintValue c = constraint(x);
  return lambda * penalty(target - c.value) + std::sqrt((x - x0).squaredNorm() + eps);
}

double PenaltyObjective::value_and_gradient(const Eigen::VectorXd& x,
                                            Eigen::VectorXd& gradient) const {
  const ConstraintValue c = constraint(x);
  const Eigen::VectorXd diff = x - x0;
  const double norm = std::sqrt(diff.squaredNorm() + eps);
  const double shortfall = target - c.value;
  gradient = diff / norm;
  if (shortfall > 0.0) gradient -= (2.0 * lambda * shortfall) * c.gradient;
  return lambda * penalty(shortfall) + norm;
}

InnerResult inner_minimize(const PenaltyObjective& objective, const Eigen::VectorXd& x_start,
                           const InnerSettings& settings, const FeatureDomain& domain) {
  InnerResult out;
  out.x = x_start;
  domain.project(out.x);
  Eigen::VectorXd g;
  out.objective = objective.value_and_gradient(out.x, g);
  domain.mask_gradient(g);
  double step = settings.initial_step;
  while (out.steps < settings.max_steps) {
    if (g.squaredNorm() == 0.0) {
      out.converged = true;
      break;
    }
    double trial_step = step;
    bool accepted = false;
    Eigen::VectorXd trial;
    double trial_value = 0.0;
    for (std::size_t h = 0; h <= settings.max_halvings; ++h) {
      trial = out.x - trial_step * g;
      domain.project(trial);
      trial_value = objective.value(trial);
      const double predicted = g.dot(out.x - trial);
      if (trial_value < out.objective && trial_value <= out.objective - settings.armijo * predicted) {
        accepted = true;
        break;
      }
      trial_step *= 0.5;
    }
    if (!accepted) {
      out.converged = true;
      break;
    }
    const double decrease = out.objective - trial_value;
    out.x = std::move(trial);
    out.objective = objective.value_and_gradient(out.x, g);
    domain.mask_gradient(g);
    ++out.steps;
    step = std::min(2.0 * trial_step, settings.initial_step);
    if (decrease < settings.tol) {
      out.converged = true;
      break;
    }
  }
  return out;
}

CfeResult penalty_search(const ConstraintFn& constraint, const Eigen::VectorXd& x0,
                         double threshold, const RocerfConfig& cfg) {
  check_config(cfg);
  CfeResult result;
  result.x0 = x0;
  result.threshold = threshold;

  auto finish = [&](const Eigen::VectorXd& x, double value, bool feasible, double lambda) {
    result.x_cf = x;
    result.constraint_value = value;
    result.feasible = feasible;
    result.lambda_final = lambda;
    result.cost_l2 = (x - x0).norm();
    result.cost_l1 = (x - x0).lpNorm<1>();
    return result;
  };

  const double start_value = constraint(x0).value;
  if (start_value >= threshold) return finish(x0, start_value, true, 0.0);

  // Inner solves are deterministic given lambda, so repeated endpoints are
  // served from the memo.
  std::map<double, Solve> memo;
  auto solve = [&](double lambda) -> const Solve& {
    auto it = memo.find(lambda);
    if (it != memo.end()) return it->second;
    PenaltyObjective objective{constraint, x0, lambda, threshold + cfg.penalty_margin, cfg.eps};
    InnerResult inner = inner_minimize(objective, x0, cfg.inner, cfg.domain);
    result.iterations += inner.steps;
    ++result.outer_iterations;
    Solve s;
    s.constraint = constraint(inner.x).value;
    s.feasible = s.constraint >= threshold;
    s.x = std::move(inner.x);
    return memo.emplace(lambda, std::move(s)).first->second;
  };

  double left = cfg.lambda_init;
  const Solve* current = &solve(left);
  for (std::size_t h = 0; current->feasible; ++h) {
    if (h == cfg.doubling_cap) {
      return finish(current->x, current->constraint, true, left);
    }
    left *= 0.5;
    current = &solve(left);
  }

  double right = left;
  for (std::size_t d = 0; !current->feasible; ++d) {
    if (d == cfg.doubling_cap) {
      finish(current->x, current->constraint, false, right);
      result.error = ErrorKind::kInfeasible;
      result.message = "no feasible minimizer up to lambda " + format_number(right);
      return result;
    }
    right *= 2.0;
    current = &solve(right);
  }
  const Solve* feasible = current;

  for (std::size_t t = 0; t < cfg.T; ++t) {
    const double mid = 0.5 * (left + right);
    const Solve& s = solve(mid);
    result.trace.push_back({left, right, mid, s.feasible});
    if (s.feasible) {
      right = mid;
      feasible = &s;
    } else {
      left = mid;
    }
  }

  // The final re-solve happens at the left endpoint; when that minimizer falls
  // short, the right endpoint's feasible minimizer is returned instead.
  const Solve& final_solve = solve(left);
  if (final_solve.feasible) {
    return finish(final_solve.x, final_solve.constraint, true, left);
  }
  return finish(feasible->x, feasible->constraint, true, right);
}

CfeResult scfe(const Classifier& model, const Eigen::VectorXd& x0, const RocerfConfig& cfg) {
  require_negative(model, x0);
  RocerfConfig plain = cfg;
  plain.k = 0;
  plain.delta = 0.0;
  return penalty_search(plain_constraint(model), x0, 0.0, plain);
}

CfeResult rocerf(const Classifier& model, const InfluenceCache& cache, const Eigen::VectorXd& x0,
                 const RocerfConfig& cfg) {
  require_negative(model, x0);
  if (cfg.k > cache.n()) {
    throw Error(ErrorKind::kKTooLarge,
                "k = " + std::to_string(cfg.k) + " exceeds n = " + std::to_string(cache.n()));
  }
  if (cache.p() != param_count(model)) {
    throw Error(ErrorKind::kSizeMismatch, "influence cache was built for a different model");
  }
  if (cfg.k == 0) return penalty_search(plain_constraint(model), x0, cfg.delta, cfg);
  const std::size_t k = cfg.k;
  ConstraintFn robust = [&cache, &model, k](const Eigen::VectorXd& x) {
    RobustValueGradient r = robust_value_and_gradient(cache, model, x, k);
    return ConstraintValue{r.value, std::move(r.gradient)};
  };
  return penalty_search(robust, x0, cfg.delta, cfg);
}

std::string method_name(Method method) {
  return method == Method::kScfe ? "scfe" : "rocerf";
}

CfeResult failed_result(const Eigen::VectorXd& x0, const Error& error) {
  CfeResult r;
  r.x0 = x0;
  r.x_cf = x0;
  r.feasible = false;
  r.error = error.kind();
  r.message = error.detail();
  return r;
}

std::vector<CfeResult> batch_explain(
    const std::vector<Eigen::VectorXd>& inputs,
    const std::function<CfeResult(const Eigen::VectorXd&)>& explain, std::size_t workers) {
  std::vector<CfeResult> out(inputs.size());
  parallel_for(
      inputs.size(),
      [&](std::size_t i) {
        try {
          out[i] = explain(inputs[i]);
        } catch (const Error& e) {
          out[i] = failed_result(inputs[i], e);
        }
      },
      workers);
  return out;
}

std::vector<CfeResult> batch_explain(const Classifier& model, const InfluenceCache* cache,
                                     const std::vector<Eigen::VectorXd>& negatives, Method method,
                                     const RocerfConfig& cfg, std::size_t workers) {
  if (method == Method::kRocerf && cache == nullptr) {
    throw Error(ErrorKind::kInvalidArgument, "rocerf needs an influence cache");
  }
  return batch_explain(
      negatives,
      [&](const Eigen::VectorXd& x0) {
        return method == Method::kScfe ? scfe(model, x0, cfg) : rocerf(model, *cache, x0, cfg);
      },
      workers);
}

std::string cfe_results_csv(const std::vector<CfeResult>& results, const std::string& method,
                            std::span<const std::size_t> ids) {
  if (!ids.empty() && ids.size() != results.size()) {
    throw Error(ErrorKind::kSizeMismatch, "one sample id per result is required");
  }
  std::ostringstream out;
  out << "sample_id,method,feasible,cost_l2,cost_l1,constraint_value,iterations\n";
  for (std::size_t i = 0; i < results.size(); ++i) {
    const CfeResult& r = results[i];
    out << (ids.empty() ? i : ids[i]) << ',' << method << ',' << (r.feasible ? "true" : "false") << ','
        << format_number(r.cost_l2) << ',' << format_number(r.cost_l1) << ','
        << format_number(r.constraint_value) << ',' << r.iterations << '\n';
  }
  return out.str();
}

}  // namespace rocerf
