#include "rocerf/harness.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <limits>
#include <set>
#include <sstream>

#include "rocerf/error.hpp"
#include "rocerf/io.hpp"
#include "rocerf/parallel.hpp"
#include "rocerf/rng.hpp"

namespace rocerf {
namespace {

struct TrialOutcome {
  std::vector<double> validity;  // per method
  std::size_t resampled = 0;
};

double validity_under(const Classifier& model, const std::vector<CfeResult>& results) {
  if (results.empty()) return 1.0;
  std::size_t valid = 0;
  for (const CfeResult& r : results) {
    if (is_valid(model, r.x_cf)) ++valid;
  }
  return static_cast<double>(valid) / static_cast<double>(results.size());
}

// Retrains after drawing a k-removal from rng, redrawing on single-class
// survivors.
Classifier retrain_random(const Dataset& train, std::size_t k, Rng& rng,
                          const TrainConfig& config, std::size_t max_retries,
                          std::size_t& resampled, RemovalMask* mask_out = nullptr) {
  for (std::size_t attempt = 0;; ++attempt) {
    RemovalMask mask(train.n(), rng.sample_without_replacement(train.n(), k));
    try {
      Classifier model = retrain_exact(train, mask, config);
      if (mask_out != nullptr) *mask_out = std::move(mask);
      return model;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kDegenerateLabels || attempt >= max_retries) throw;
      ++resampled;
    }
  }
}

}  // namespace

std::vector<std::size_t> negative_indices(const Classifier& model, const Dataset& data) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < data.n(); ++i) {
    if (score(model, data.row(i)) < 0.0) out.push_back(i);
  }
  return out;
}

std::vector<Eigen::VectorXd> rows_of(const Dataset& data, const std::vector<std::size_t>& indices) {
  std::vector<Eigen::VectorXd> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(data.row(i));
  return out;
}

std::size_t TrialSpec::removal_count(std::size_t n) const {
  const double raw = std::ceil(alpha * static_cast<double>(n) - 1e-9);
  return std::max<std::size_t>(1, static_cast<std::size_t>(raw));
}

MeanSe mean_and_se(const std::vector<double>& values) {
  MeanSe out;
  if (values.empty()) return out;
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    const double var = ss / static_cast<double>(values.size() - 1);
    out.se = std::sqrt(var / static_cast<double>(values.size()));
  }
  return out;
}

void EvalReport::append(const EvalReport& other) {
  rows.insert(rows.end(), other.rows.begin(), other.rows.end());
  retrains += other.retrains;
  resampled_masks += other.resampled_masks;
}

const MethodAlphaStats* EvalReport::find(const std::string& method, double alpha) const {
  for (const MethodAlphaStats& row : rows) {
    if (row.method == method && row.alpha == alpha) return &row;
  }
  return nullptr;
}

EvalReport run_removal_trials(const Dataset& train, const TrialSpec& spec,
                              const std::vector<MethodCfes>& methods) {
  if (!(spec.alpha > 0.0 && spec.alpha < 1.0)) {
    throw Error(ErrorKind::kInvalidArgument, "alpha must lie in (0, 1)");
  }
  if (spec.M == 0) throw Error(ErrorKind::kInvalidArgument, "M must be >= 1");
  const std::size_t removals = spec.removal_count(train.n());
  if (removals >= train.n()) {
    throw Error(ErrorKind::kKTooLarge, "alpha removes every training row");
  }

  std::vector<TrialOutcome> outcomes(spec.M);
  parallel_for(
      spec.M,
      [&](std::size_t m) {
        Rng rng(derive_seed(spec.seed, m));
        TrialOutcome& out = outcomes[m];
        const Classifier model =
            retrain_random(train, removals, rng, spec.train_config, spec.max_retries, out.resampled);
        out.validity.reserve(methods.size());
        for (const MethodCfes& method : methods) out.validity.push_back(validity_under(model, method.results));
      },
      spec.workers);

  EvalReport report;
  report.retrains = spec.M;
  for (const TrialOutcome& o : outcomes) {
    report.resampled_masks += o.resampled;
    report.retrains += o.resampled;
  }
  for (std::size_t j = 0; j < methods.size(); ++j) {
    MethodAlphaStats row;
    row.method = methods[j].method;
    row.alpha = spec.alpha;
    row.removals = removals;
    row.samples = methods[j].results.size();
    for (const TrialOutcome& o : outcomes) row.validity.push_back(o.validity[j]);
    const MeanSe v = mean_and_se(row.validity);
    row.validity_mean = v.mean;
    row.validity_se = v.se;
    std::vector<double> l2;
    std::vector<double> l1;
    for (const CfeResult& r : methods[j].results) {
      if (r.error && *r.error != ErrorKind::kInfeasible) {
        ++row.failed_samples;
        continue;
      }
      l2.push_back(r.cost_l2);
      l1.push_back(r.cost_l1);
    }
    const MeanSe c2 = mean_and_se(l2);
    const MeanSe c1 = mean_and_se(l1);
    row.cost_l2_mean = c2.mean;
    row.cost_l2_se = c2.se;
    row.cost_l1_mean = c1.mean;
    row.cost_l1_se = c1.se;
    report.rows.push_back(std::move(row));
  }
  return report;
}

std::string eval_report_csv(const EvalReport& report) {
  std::ostringstream out;
  out << "method,alpha,validity_mean,validity_se,cost_l2_mean,cost_l2_se,cost_l1_mean,cost_l1_se\n";
  for (const MethodAlphaStats& r : report.rows) {
    out << r.method << ',' << format_number(r.alpha) << ',' << format_number(r.validity_mean) << ','
        << format_number(r.validity_se) << ',' << format_number(r.cost_l2_mean) << ','
        << format_number(r.cost_l2_se) << ',' << format_number(r.cost_l1_mean) << ','
        << format_number(r.cost_l1_se) << '\n';
  }
  return out.str();
}

std::string eval_report_json(const EvalReport& report, const std::string& provenance_json) {
  nlohmann::json doc;
  doc["format"] = "rocerf-eval-report";
  doc["version"] = 1;
  doc["standard_error"] = "standard error of the mean over trials (sample stddev, ddof=1, / sqrt(M))";
  doc["validity_indicator"] = "f(x_cf) >= 0 under the retrained model";
  doc["retrains"] = report.retrains;
  doc["resampled_masks"] = report.resampled_masks;
  nlohmann::json rows = nlohmann::json::array();
  for (const MethodAlphaStats& r : report.rows) {
    rows.push_back({{"method", r.method},
                    {"alpha", r.alpha},
                    {"removals", r.removals},
                    {"samples", r.samples},
                    {"failed_samples", r.failed_samples},
                    {"validity_mean", r.validity_mean},
                    {"validity_se", r.validity_se},
                    {"cost_l2_mean", r.cost_l2_mean},
                    {"cost_l2_se", r.cost_l2_se},
                    {"cost_l1_mean", r.cost_l1_mean},
                    {"cost_l1_se", r.cost_l1_se},
                    {"validity_per_trial", r.validity}});
  }
  doc["rows"] = std::move(rows);
  doc["provenance"] = nlohmann::json::parse(provenance_json);
  return doc.dump(2) + "\n";
}

std::uint64_t binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t result = 1;
  for (std::size_t i = 1; i <= k; ++i) {
    // result * (n - k + i) / i stays exact because result is C(n-k+i-1, i-1).
    const std::uint64_t factor = n - k + i;
    if (result > std::numeric_limits<std::uint64_t>::max() / factor) {
      return std::numeric_limits<std::uint64_t>::max();
    }
    result = result * factor / i;
  }
  return result;
}

OracleReport exhaustive_validity_oracle(const Dataset& train, std::size_t k,
                                        const std::vector<MethodCfes>& methods,
                                        const TrainConfig& train_config, std::uint64_t cap,
                                        std::size_t workers) {
  const std::uint64_t count = binomial(train.n(), k);
  if (k > train.n() || count > cap) {
    throw Error(ErrorKind::kCombinatoricsTooLarge,
                "C(" + std::to_string(train.n()) + ", " + std::to_string(k) + ") exceeds the cap of " +
                    std::to_string(cap) + " retrains");
  }
  std::vector<std::vector<std::size_t>> masks;
  masks.reserve(static_cast<std::size_t>(count));
  std::vector<std::size_t> combo(k);
  for (std::size_t i = 0; i < k; ++i) combo[i] = i;
  for (;;) {
    masks.push_back(combo);
    std::size_t i = k;
    while (i > 0 && combo[i - 1] == train.n() - k + i - 1) --i;
    if (i == 0) break;
    ++combo[i - 1];
    for (std::size_t j = i; j < k; ++j) combo[j] = combo[j - 1] + 1;
  }

  std::vector<std::vector<double>> validity(masks.size());
  std::vector<char> skipped(masks.size(), 0);
  parallel_for(
      masks.size(),
      [&](std::size_t m) {
        try {
          const Classifier model = retrain_exact(train, RemovalMask(train.n(), masks[m]), train_config);
          for (const MethodCfes& method : methods) validity[m].push_back(validity_under(model, method.results));
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::kDegenerateLabels) throw;
          skipped[m] = 1;
        }
      },
      workers);

  OracleReport report;
  report.k = k;
  report.retrains = masks.size();
  for (char s : skipped) report.skipped_masks += static_cast<std::size_t>(s);
  for (std::size_t j = 0; j < methods.size(); ++j) {
    OracleMethodResult r;
    r.method = methods[j].method;
    r.worst_validity = std::numeric_limits<double>::infinity();
    for (std::size_t m = 0; m < masks.size(); ++m) {
      if (skipped[m]) continue;
      if (validity[m][j] < r.worst_validity) {
        r.worst_validity = validity[m][j];
        r.witness = masks[m];
      }
    }
    report.methods.push_back(std::move(r));
  }
  return report;
}

DeltaEstimate estimate_delta(const Dataset& train, const std::vector<Eigen::VectorXd>& validation,
                             const Classifier& model, const InfluenceCache& cache,
                             const TrainConfig& train_config, std::size_t k, std::size_t n_sim,
                             std::uint64_t seed, double safety_factor, std::size_t workers) {
  if (n_sim == 0) throw Error(ErrorKind::kInvalidArgument, "n_sim must be >= 1");
  if (k > train.n()) throw Error(ErrorKind::kKTooLarge, "k exceeds the training set size");
  if (cache.n() != train.n()) throw Error(ErrorKind::kSizeMismatch, "cache and training set differ in n");
  if (k == 0) return {0.0, 0.0, n_sim, 0};

  // The removal the robust score guards against at each validation point,
  // deduplicated. Random draws alone rarely hit these.
  std::set<std::vector<std::size_t>> chosen;
  for (const Eigen::VectorXd& x : validation) chosen.insert(robust_evaluate(cache, model, x, k).selection.indices);
  const std::vector<std::vector<std::size_t>> adversarial(chosen.begin(), chosen.end());

  auto worst_error = [&](const Classifier& retrained, const RemovalMask& mask) {
    double worst = -std::numeric_limits<double>::infinity();
    for (const Eigen::VectorXd& x : validation) {
      worst = std::max(worst, approx_score(cache, model, mask, x) - score(retrained, x));
    }
    return worst;
  };

  std::vector<double> worst(n_sim + adversarial.size(), -std::numeric_limits<double>::infinity());
  parallel_for(
      worst.size(),
      [&](std::size_t s) {
        if (s < n_sim) {
          Rng rng(derive_seed(seed, s));
          std::size_t resampled = 0;
          RemovalMask mask;
          const Classifier retrained = retrain_random(train, k, rng, train_config, 10, resampled, &mask);
          worst[s] = worst_error(retrained, mask);
          return;
        }
        const RemovalMask mask(train.n(), adversarial[s - n_sim]);
        try {
          worst[s] = worst_error(retrain_exact(train, mask, train_config), mask);
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::kDegenerateLabels) throw;
        }
      },
      workers);
  DeltaEstimate out;
  out.simulations = n_sim;
  out.adversarial = adversarial.size();
  out.max_error = *std::max_element(worst.begin(), worst.end());
  if (!std::isfinite(out.max_error)) out.max_error = 0.0;
  out.delta = std::max(0.0, out.max_error) * safety_factor;
  return out;
}

CostBoundReport cost_bound_check(const std::vector<CfeResult>& scfe_results,
                                 const std::vector<CfeResult>& rocerf_results,
                                 const Classifier& model, std::size_t k, std::size_t n) {
  if (scfe_results.size() != rocerf_results.size()) {
    throw Error(ErrorKind::kUnpairedResults, "result lists differ in length");
  }
  CostBoundReport out;
  const double theta_norm = parameters(model).norm();
  for (std::size_t i = 0; i < scfe_results.size(); ++i) {
    const CfeResult& a = scfe_results[i];
    const CfeResult& b = rocerf_results[i];
    if (a.x0.size() != b.x0.size() || a.x0 != b.x0) {
      throw Error(ErrorKind::kUnpairedResults, "results at position " + std::to_string(i) +
                                                   " explain different inputs");
    }
    if (!a.feasible || !b.feasible) {
      ++out.excluded;
      continue;
    }
    const double extra = b.cost_l2 - a.cost_l2;
    out.extra_cost.push_back(extra);
    if (k > 0) out.implied_c.push_back(extra * static_cast<double>(n) * theta_norm / static_cast<double>(k));
  }
  out.pairs = out.extra_cost.size();
  out.mean_extra_cost = mean_and_se(out.extra_cost).mean;
  out.mean_implied_c = mean_and_se(out.implied_c).mean;
  for (double c : out.implied_c) out.max_implied_c = std::max(out.max_implied_c, c);
  return out;
}

SweepReport k_sensitivity_sweep(const Dataset& train, const std::vector<std::size_t>& k_values,
                                const std::vector<double>& alphas,
                                const std::vector<std::vector<CfeResult>>& cfes_per_k,
                                const TrialSpec& base, double tolerance) {
  if (cfes_per_k.size() != k_values.size()) {
    throw Error(ErrorKind::kSizeMismatch, "need one result list per k value");
  }
  SweepReport out;
  out.k_values = k_values;
  out.alphas = alphas;
  out.validity.assign(k_values.size(), std::vector<double>(alphas.size(), 0.0));
  std::vector<MethodCfes> methods;
  for (std::size_t i = 0; i < k_values.size(); ++i) {
    methods.push_back({"rocerf_k" + std::to_string(k_values[i]), cfes_per_k[i]});
  }
  for (std::size_t a = 0; a < alphas.size(); ++a) {
    TrialSpec spec = base;
    spec.alpha = alphas[a];
    EvalReport r = run_removal_trials(train, spec, methods);
    for (std::size_t i = 0; i < k_values.size(); ++i) out.validity[i][a] = r.rows[i].validity_mean;
    out.trials.append(r);
  }
  for (std::size_t i = 0; i < k_values.size(); ++i) {
    for (std::size_t a = 0; a < alphas.size(); ++a) {
      TrialSpec sa = base;
      sa.alpha = alphas[a];
      if (sa.removal_count(train.n()) > k_values[i]) continue;
      for (std::size_t b = 0; b < alphas.size(); ++b) {
        TrialSpec sb = base;
        sb.alpha = alphas[b];
        if (sb.removal_count(train.n()) <= k_values[i]) continue;
        if (out.validity[i][a] < out.validity[i][b] - tolerance) {
          out.pattern_holds = false;
          out.violations.push_back("k=" + std::to_string(k_values[i]) + ": validity " +
                                   format_number(out.validity[i][a]) + " at alpha " +
                                   format_number(alphas[a]) + " < " +
                                   format_number(out.validity[i][b]) + " at alpha " +
                                   format_number(alphas[b]));
        }
      }
    }
  }
  return out;
}

}  // namespace rocerf
