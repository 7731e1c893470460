#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rocerf/data.hpp"
#include "rocerf/error.hpp"
#include "rocerf/harness.hpp"
#include "rocerf/io.hpp"
#include "rocerf/models.hpp"
#include "rocerf/parallel.hpp"
#include "rocerf/recourse.hpp"
#include "rocerf/rng.hpp"
#include "rocerf/surrogate.hpp"
#include "rocerf/unlearn.hpp"

namespace rocerf::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument:
    case ErrorKind::kMissingFile:
    case ErrorKind::kKTooLarge:
    case ErrorKind::kConfigError:
    case ErrorKind::kCombinatoricsTooLarge:
      return kExitConfig;
    case ErrorKind::kSchemaMismatch:
    case ErrorKind::kDegenerateLabels:
    case ErrorKind::kEmptyTrainingSet:
    case ErrorKind::kDegenerateSplit:
    case ErrorKind::kDimensionMismatch:
    case ErrorKind::kIndexOutOfRange:
    case ErrorKind::kSizeMismatch:
    case ErrorKind::kUnpairedResults:
    case ErrorKind::kCorruptFile:
      return kExitData;
    case ErrorKind::kNonConvergence:
    case ErrorKind::kNotPositiveDefinite:
    case ErrorKind::kCgNonConvergence:
    case ErrorKind::kDivergedLoss:
    case ErrorKind::kNotNegativeSample:
    case ErrorKind::kInfeasible:
      return kExitRuntime;
  }
  return kExitRuntime;
}

std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

struct GlobalOptions {
  std::string out_dir = "rocerf_out";
  std::uint64_t seed = 0;
  std::size_t workers = 0;
};

struct ModelOptions {
  std::string family = "lr";
  std::optional<double> gamma;
  double newton_tol = 1e-10;
  std::size_t max_iters = 100;
  double learning_rate = 0.01;
  std::size_t epochs = 200;
  std::size_t batch = 32;
  std::size_t hidden_layers = 3;
  std::size_t width_multiplier = 2;
  std::optional<double> damping;
  bool no_cache = false;
};

struct RecourseOptions {
  std::optional<std::size_t> k;
  double k_fraction = 0.005;
  double delta = 0.0;
  std::size_t T = 20;
  double lambda_init = 0.1;
  std::size_t doubling_cap = 60;
  double margin = 1e-4;
  std::size_t max_steps = 1000;
  double tol = 1e-6;
  std::optional<double> clip_min;
  std::optional<double> clip_max;
  std::size_t n_perturb = 10000;
  double noise = 0.1;
  bool noise_stddev = false;
};

struct Inputs {
  std::string model;
  std::string cache;
  std::string train;
  std::string val;
  std::string test;
  std::string data;
  std::string schema;
};

void add_model_options(CLI::App* cmd, ModelOptions& m) {
  cmd->add_option("--family", m.family, "lr or mlp")->check(CLI::IsMember({"lr", "mlp"}));
  cmd->add_option("--gamma", m.gamma, "L2 strength (lr default 1/n, mlp default 1e-3)");
  cmd->add_option("--newton-tol", m.newton_tol, "Newton gradient-norm tolerance");
  cmd->add_option("--max-iters", m.max_iters, "Newton iteration cap");
  cmd->add_option("--learning-rate", m.learning_rate, "MLP SGD learning rate");
  cmd->add_option("--epochs", m.epochs, "MLP epochs");
  cmd->add_option("--batch", m.batch, "MLP minibatch size");
  cmd->add_option("--hidden-layers", m.hidden_layers, "MLP hidden layers");
  cmd->add_option("--width-multiplier", m.width_multiplier, "MLP hidden width as a multiple of d");
  cmd->add_option("--damping", m.damping, "Hessian damping (lr default 0, mlp default 1e-2)");
  cmd->add_flag("--no-cache", m.no_cache, "Skip writing the influence cache");
}

void add_recourse_options(CLI::App* cmd, RecourseOptions& r) {
  cmd->add_option("--k", r.k, "Removal budget as a count (overrides --k-fraction)");
  cmd->add_option("--k-fraction", r.k_fraction, "Removal budget as a fraction of n, rounded up");
  cmd->add_option("--delta", r.delta, "Robust score threshold");
  cmd->add_option("--T", r.T, "Binary-search iterations");
  cmd->add_option("--lambda-init", r.lambda_init, "Initial penalty coefficient");
  cmd->add_option("--doubling-cap", r.doubling_cap, "Maximum halvings/doublings of lambda");
  cmd->add_option("--margin", r.margin, "Penalty target margin above delta");
  cmd->add_option("--max-steps", r.max_steps, "Inner descent step cap");
  cmd->add_option("--tol", r.tol, "Inner objective-decrease tolerance");
  cmd->add_option("--clip-min", r.clip_min, "Lower bound for every mutable feature");
  cmd->add_option("--clip-max", r.clip_max, "Upper bound for every mutable feature");
  cmd->add_option("--n-perturb", r.n_perturb, "Surrogate perturbation count");
  cmd->add_option("--noise", r.noise, "Surrogate noise variance (stddev with --noise-stddev)");
  cmd->add_flag("--noise-stddev", r.noise_stddev, "Read --noise as a standard deviation");
}

std::size_t resolve_k(const RecourseOptions& r, std::size_t n) {
  std::size_t k = 0;
  if (r.k) {
    k = *r.k;
  } else {
    if (!(r.k_fraction >= 0.0)) throw Error(ErrorKind::kConfigError, "k-fraction must be >= 0");
    k = static_cast<std::size_t>(std::ceil(r.k_fraction * static_cast<double>(n) - 1e-9));
  }
  if (k > n) {
    throw Error(ErrorKind::kKTooLarge, "k = " + std::to_string(k) + " exceeds n = " + std::to_string(n));
  }
  return k;
}

RocerfConfig make_rocerf_config(const RecourseOptions& r, std::size_t k, const Dataset& reference) {
  RocerfConfig cfg;
  cfg.k = k;
  cfg.delta = r.delta;
  cfg.T = r.T;
  cfg.lambda_init = r.lambda_init;
  cfg.doubling_cap = r.doubling_cap;
  cfg.penalty_margin = r.margin;
  cfg.inner.max_steps = r.max_steps;
  cfg.inner.tol = r.tol;
  if (reference.bias_column) cfg.domain.fixed.push_back(*reference.bias_column);
  const auto d = static_cast<Eigen::Index>(reference.d());
  if (r.clip_min) cfg.domain.lower = Eigen::VectorXd::Constant(d, *r.clip_min);
  if (r.clip_max) cfg.domain.upper = Eigen::VectorXd::Constant(d, *r.clip_max);
  if (reference.bias_column) {
    const auto b = static_cast<Eigen::Index>(*reference.bias_column);
    if (cfg.domain.lower) (*cfg.domain.lower)(b) = 1.0;
    if (cfg.domain.upper) (*cfg.domain.upper)(b) = 1.0;
  }
  return cfg;
}

SurrogateSettings make_surrogate_settings(const RecourseOptions& r, std::uint64_t seed,
                                          const Dataset& reference) {
  SurrogateSettings s;
  s.n_perturb = r.n_perturb;
  s.noise = r.noise;
  s.noise_is_variance = !r.noise_stddev;
  s.seed = seed;
  if (reference.bias_column) s.fixed.push_back(*reference.bias_column);
  return s;
}

TrainConfig make_train_config(const ModelOptions& m, std::uint64_t seed) {
  if (m.family == "lr") {
    LogRegConfig c;
    c.gamma = m.gamma;
    c.newton_tol = m.newton_tol;
    c.max_iters = m.max_iters;
    return c;
  }
  MlpConfig c;
  c.learning_rate = m.learning_rate;
  c.epochs = m.epochs;
  c.batch_size = m.batch;
  c.seed = seed;
  if (m.gamma) c.gamma = *m.gamma;
  c.hidden_layers = m.hidden_layers;
  c.width_multiplier = m.width_multiplier;
  return c;
}

Classifier load_model(const std::string& path) {
  if (path.empty()) throw Error(ErrorKind::kConfigError, "--model is required");
  return model_from_json(read_file(path), path);
}

Dataset load_dataset(const std::string& path, const char* key) {
  if (path.empty()) throw Error(ErrorKind::kConfigError, std::string("--") + key + " is required");
  return read_dataset_csv(path);
}

double default_damping(const Classifier& model) { return is_linear(model) ? 0.0 : kDefaultMlpDamping; }

InfluenceCache obtain_cache(const Classifier& model, const Inputs& in, const Dataset* train,
                            std::optional<double> damping) {
  if (!in.cache.empty()) {
    InfluenceCache cache = load_influence_cache(in.cache);
    if (cache.p() != param_count(model)) {
      throw Error(ErrorKind::kSizeMismatch, in.cache + ": cache does not match the model");
    }
    if (train != nullptr && cache.n() != train->n()) {
      throw Error(ErrorKind::kSizeMismatch, in.cache + ": cache does not match the training set");
    }
    return cache;
  }
  if (train == nullptr) throw Error(ErrorKind::kConfigError, "--cache or --train is required");
  const HessianFactor factor =
      build_hessian_factor(model, *train, damping.value_or(default_damping(model)));
  return build_influence_cache(model, *train, factor);
}

TrainConfig retrain_config_of(const Classifier& model, const ModelOptions& m) {
  LogRegConfig base;
  base.newton_tol = m.newton_tol;
  base.max_iters = m.max_iters;
  return training_config_of(model, base);
}

struct Generated {
  std::vector<CfeResult> results;
  std::vector<std::optional<LocalSurrogate>> surrogates;
};

const std::vector<std::string> kMethods = {"scfe", "rocerf", "scfe_surrogate", "rocerf_surrogate"};

Generated generate(const std::string& method, const Classifier& model, const InfluenceCache* cache,
                   const Dataset* train, const std::vector<Eigen::VectorXd>& xs, RocerfConfig cfg,
                   const SurrogateSettings& sur, std::size_t workers) {
  Generated g;
  if (method == "scfe" || method == "rocerf") {
    g.results = batch_explain(model, cache, xs, method == "scfe" ? Method::kScfe : Method::kRocerf, cfg, workers);
    g.surrogates.resize(xs.size());
    return g;
  }
  if (method != "scfe_surrogate" && method != "rocerf_surrogate") {
    throw Error(ErrorKind::kConfigError, "unknown method '" + method + "'");
  }
  if (train == nullptr) throw Error(ErrorKind::kConfigError, "surrogate methods need --train");
  if (method == "scfe_surrogate") {
    cfg.k = 0;
    cfg.delta = 0.0;
  }
  g.results.resize(xs.size());
  g.surrogates.resize(xs.size());
  parallel_for(
      xs.size(),
      [&](std::size_t i) {
        SurrogateSettings s = sur;
        s.seed = derive_seed(sur.seed, i);
        try {
          SurrogateCfe r = rocerf_via_surrogate(model, *train, xs[i], cfg, s);
          g.results[i] = std::move(r.result);
          g.surrogates[i] = std::move(r.surrogate);
        } catch (const Error& e) {
          g.results[i] = failed_result(xs[i], e);
        }
      },
      workers);
  return g;
}

json cfe_to_json(const CfeResult& r, std::size_t id, const std::optional<LocalSurrogate>& sur) {
  json j{{"sample_id", id},
         {"x0", to_vector(r.x0)},
         {"x_cf", to_vector(r.x_cf)},
         {"feasible", r.feasible},
         {"cost_l2", r.cost_l2},
         {"cost_l1", r.cost_l1},
         {"constraint_value", r.constraint_value},
         {"threshold", r.threshold},
         {"iterations", r.iterations},
         {"outer_iterations", r.outer_iterations},
         {"lambda_final", r.lambda_final},
         {"search_steps", r.trace.size()}};
  if (r.error) j["error"] = {{"kind", std::string(to_string(*r.error))}, {"message", r.message}};
  if (sur) {
    j["surrogate"] = {{"fit_accuracy", sur->fit_accuracy},
                      {"low_fidelity", sur->low_fidelity},
                      {"n_perturb", sur->n_perturb},
                      {"noise_stddev", sur->noise_stddev},
                      {"noise_widenings", sur->widenings},
                      {"labels", "hard black-box signs, uniform weights"}};
  }
  return j;
}

json recourse_json(const RocerfConfig& cfg) {
  return {{"k", cfg.k},
          {"delta", cfg.delta},
          {"T", cfg.T},
          {"lambda_init", cfg.lambda_init},
          {"doubling_cap", cfg.doubling_cap},
          {"penalty_margin", cfg.penalty_margin},
          {"eps", cfg.eps},
          {"max_steps", cfg.inner.max_steps},
          {"tol", cfg.inner.tol},
          {"initial_step", cfg.inner.initial_step},
          {"fixed_features", cfg.domain.fixed}};
}

class Runner {
 public:
  Runner(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
      : out_(out), err_(err) {
    for (int i = 0; i < argc; ++i) argv_.emplace_back(argv[i]);
  }

  int run() {
    CLI::App app{"Counterfactual explanations robust to training-data deletion", "rocerf"};
    app.set_config("--config", "", "key = value configuration file; command-line flags override it");
    app.allow_config_extras(CLI::config_extras_mode::error);
    app.require_subcommand(1, 1);
    app.fallthrough();
    app.add_option("-o,--out", global_.out_dir, "Output directory");
    app.add_option("--seed", global_.seed, "Global seed");
    app.add_option("--workers", global_.workers, "Worker threads (0 = hardware concurrency)");

    auto* preprocess = app.add_subcommand("preprocess", "Split a raw CSV and standardize it");
    preprocess->add_option("--data", in_.data, "Raw CSV")->required();
    preprocess->add_option("--schema", in_.schema, "Schema file")->required();
    preprocess->add_option("--train-frac", split_.train_fraction, "Training fraction");
    preprocess->add_option("--val-frac", split_.val_fraction, "Validation fraction");
    preprocess->add_option("--test-frac", split_.test_fraction, "Test fraction");
    preprocess->add_flag("--no-bias", no_bias_, "Do not append the always-one column");

    auto* train = app.add_subcommand("train", "Train a model and its influence cache");
    train->add_option("--train", in_.train, "Standardized training CSV")->required();
    train->add_option("--test", in_.test, "Standardized test CSV for accuracy");
    add_model_options(train, model_);

    auto* explain = app.add_subcommand("explain", "Generate counterfactuals for negative rows");
    explain->add_option("--model", in_.model, "Model JSON")->required();
    explain->add_option("--data", in_.data, "Standardized CSV whose negatives are explained")->required();
    explain->add_option("--cache", in_.cache, "Influence cache");
    explain->add_option("--train", in_.train, "Training CSV (builds the cache; needed by surrogates)");
    explain->add_option("--method", method_, "scfe, rocerf, scfe_surrogate or rocerf_surrogate")
        ->check(CLI::IsMember(kMethods));
    add_recourse_options(explain, rec_);
    add_model_options(explain, model_);

    auto* evaluate = app.add_subcommand("evaluate", "Random-removal validity and cost report");
    evaluate->add_option("--model", in_.model, "Model JSON")->required();
    evaluate->add_option("--train", in_.train, "Training CSV")->required();
    evaluate->add_option("--test", in_.test, "Test CSV")->required();
    evaluate->add_option("--cache", in_.cache, "Influence cache");
    evaluate->add_option("--methods", methods_, "Comma-separated methods")->delimiter(',');
    evaluate->add_option("--alphas", alphas_, "Comma-separated removal fractions")->delimiter(',');
    evaluate->add_option("--M", M_, "Trials per alpha");
    add_recourse_options(evaluate, rec_);
    add_model_options(evaluate, model_);

    auto* oracle = app.add_subcommand("oracle", "Worst-case validity over every k-removal");
    oracle->add_option("--model", in_.model, "Model JSON")->required();
    oracle->add_option("--train", in_.train, "Training CSV")->required();
    oracle->add_option("--test", in_.test, "Test CSV")->required();
    oracle->add_option("--cache", in_.cache, "Influence cache");
    oracle->add_option("--methods", methods_, "Comma-separated methods")->delimiter(',');
    oracle->add_option("--cap", cap_, "Maximum number of retrains");
    add_recourse_options(oracle, rec_);
    add_model_options(oracle, model_);

    auto* sweep = app.add_subcommand("sweep-k", "ROCERF validity over a k by alpha grid");
    sweep->add_option("--model", in_.model, "Model JSON")->required();
    sweep->add_option("--train", in_.train, "Training CSV")->required();
    sweep->add_option("--test", in_.test, "Test CSV")->required();
    sweep->add_option("--cache", in_.cache, "Influence cache");
    sweep->add_option("--k-values", k_values_, "Comma-separated k counts")->delimiter(',');
    sweep->add_option("--k-fractions", k_fractions_, "Comma-separated k fractions of n")->delimiter(',');
    sweep->add_option("--alphas", alphas_, "Comma-separated removal fractions")->delimiter(',');
    sweep->add_option("--M", M_, "Trials per alpha");
    add_recourse_options(sweep, rec_);
    add_model_options(sweep, model_);

    auto* delta = app.add_subcommand("estimate-delta", "Estimate delta from simulated removals");
    delta->add_option("--model", in_.model, "Model JSON")->required();
    delta->add_option("--train", in_.train, "Training CSV")->required();
    delta->add_option("--val", in_.val, "Validation CSV")->required();
    delta->add_option("--cache", in_.cache, "Influence cache");
    delta->add_option("--n-sim", n_sim_, "Simulated removals");
    delta->add_option("--safety", safety_, "Safety factor");
    add_recourse_options(delta, rec_);
    add_model_options(delta, model_);

    auto* verify = app.add_subcommand("verify", "Property suite on synthetic data");
    verify->add_option("--k", verify_k_, "Removal budget for the oracle check");
    verify->add_option("--cache", in_.cache, "Also load and check this cache file");

    try {
      app.parse(static_cast<int>(argv_.size()), to_argv().data());
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e, out_, err_);
      return code == 0 ? kExitOk : kExitConfig;
    }

    command_ = app.get_subcommands().front()->get_name();
    config_text_ = app.config_to_str(true, false);
    try {
      if (command_ == "preprocess") return cmd_preprocess();
      if (command_ == "train") return cmd_train();
      if (command_ == "explain") return cmd_explain();
      if (command_ == "evaluate") return cmd_evaluate();
      if (command_ == "oracle") return cmd_oracle();
      if (command_ == "sweep-k") return cmd_sweep();
      if (command_ == "estimate-delta") return cmd_estimate_delta();
      return cmd_verify();
    } catch (const Error& e) {
      return report_error(e.kind(), e.what(), exit_code_for(e.kind()));
    } catch (const std::exception& e) {
      return report_error(std::nullopt, e.what(), kExitRuntime);
    }
  }

 private:
  std::vector<const char*> to_argv() const {
    std::vector<const char*> v;
    for (const std::string& s : argv_) v.push_back(s.c_str());
    return v;
  }

  fs::path out_path(const std::string& name) const { return fs::path(global_.out_dir) / name; }

  void ensure_out_dir() const { fs::create_directories(global_.out_dir); }

  void write(const std::string& name, const std::string& contents) const {
    ensure_out_dir();
    write_file_atomic(out_path(name), contents);
  }

  json provenance(json extra = json::object()) const {
    json p{{"format", "rocerf-provenance"},
           {"version", 1},
           {"command", command_},
           {"argv", argv_},
           {"seed", global_.seed},
           {"config", config_text_}};
    for (auto it = extra.begin(); it != extra.end(); ++it) p[it.key()] = it.value();
    return p;
  }

  void write_provenance(json extra = json::object()) const {
    write("provenance.json", provenance(std::move(extra)).dump(2) + "\n");
  }

  int report_error(std::optional<ErrorKind> kind, const std::string& message, int code) {
    err_ << "error: " << message << "\n";
    try {
      json e{{"format", "rocerf-error"},
             {"command", command_},
             {"kind", kind ? std::string(to_string(*kind)) : "Internal"},
             {"message", message},
             {"exit_code", code}};
      write("error.json", e.dump(2) + "\n");
    } catch (const std::exception&) {
      // The output directory itself may be the problem; stderr already has it.
    }
    return code;
  }

  int cmd_preprocess() {
    const Schema schema = load_schema(in_.schema);
    const RawDataset raw = load_csv(in_.data, schema);
    SplitSpec spec = split_;
    spec.seed = global_.seed;
    const std::array<RawDataset, 3> parts = split(raw, spec);
    const std::array<RawDataset, 2> others{parts[1], parts[2]};
    const Preprocessed pre = fit_apply_preprocess(parts[0], others, !no_bias_);
    ensure_out_dir();
    write_dataset_csv(out_path("train.csv"), pre.train);
    write_dataset_csv(out_path("val.csv"), pre.others[0]);
    write_dataset_csv(out_path("test.csv"), pre.others[1]);
    const Preprocessor& p = pre.preprocessor;
    json pj{{"format", "rocerf-preprocessor"},
            {"version", 1},
            {"numeric_names", p.numeric_names},
            {"numeric_means", to_vector(p.numeric_means)},
            {"numeric_stddevs", to_vector(p.numeric_stddevs)},
            {"categorical_names", p.categorical_names},
            {"categories", p.categories},
            {"append_bias", p.append_bias},
            {"feature_names", p.feature_names()}};
    write("preprocessor.json", pj.dump(2) + "\n");
    write_provenance({{"rows", raw.rows()},
                      {"dropped_rows", raw.dropped_rows},
                      {"train_rows", pre.train.n()},
                      {"val_rows", pre.others[0].n()},
                      {"test_rows", pre.others[1].n()},
                      {"features", pre.train.d()}});
    out_ << "rows " << raw.rows() << " (dropped " << raw.dropped_rows << "), features " << pre.train.d()
         << ", split " << pre.train.n() << "/" << pre.others[0].n() << "/" << pre.others[1].n() << "\n";
    return kExitOk;
  }

  int cmd_train() {
    const Dataset data = load_dataset(in_.train, "train");
    const TrainConfig config = make_train_config(model_, global_.seed);
    const auto start = std::chrono::steady_clock::now();
    const Classifier model = rocerf::train(data, config);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write("model.json", model_to_json(model));
    json metrics{{"train_accuracy", accuracy(model, data)}, {"train_seconds", seconds}, {"parameters", param_count(model)}};
    if (!in_.test.empty()) metrics["test_accuracy"] = accuracy(model, read_dataset_csv(in_.test));
    if (!model_.no_cache) {
      const double damping = model_.damping.value_or(default_damping(model));
      const InfluenceCache cache = build_influence_cache(model, data, build_hessian_factor(model, data, damping));
      save_influence_cache(out_path("influence.bin"), cache);
      metrics["cache_damping"] = damping;
    }
    write("metrics.json", metrics.dump(2) + "\n");
    write_provenance({{"metrics", metrics}});
    out_ << metrics.dump() << "\n";
    return kExitOk;
  }

  int cmd_explain() {
    const Classifier model = load_model(in_.model);
    const Dataset data = load_dataset(in_.data, "data");
    std::optional<Dataset> train;
    if (!in_.train.empty()) train = read_dataset_csv(in_.train);
    const std::size_t n = train ? train->n() : 0;
    std::optional<InfluenceCache> cache;
    if (method_ == "rocerf") cache = obtain_cache(model, in_, train ? &*train : nullptr, model_.damping);
    const std::size_t k = resolve_k(rec_, cache ? cache->n() : n);
    const RocerfConfig cfg = make_rocerf_config(rec_, k, data);
    const std::vector<std::size_t> ids = negative_indices(model, data);
    const std::vector<Eigen::VectorXd> xs = rows_of(data, ids);
    const Generated g = generate(method_, model, cache ? &*cache : nullptr, train ? &*train : nullptr, xs, cfg,
                                 make_surrogate_settings(rec_, global_.seed, data), global_.workers);
    write("cfes.csv", cfe_results_csv(g.results, method_, ids));
    json items = json::array();
    for (std::size_t i = 0; i < g.results.size(); ++i) items.push_back(cfe_to_json(g.results[i], ids[i], g.surrogates[i]));
    json sidecar{{"format", "rocerf-cfes"}, {"version", 1}, {"method", method_}, {"recourse", recourse_json(cfg)},
                 {"results", items}};
    if (method_.ends_with("_surrogate")) {
      sidecar["surrogate"] = {{"n_perturb", rec_.n_perturb},
                              {"noise", rec_.noise},
                              {"noise_interpretation", rec_.noise_stddev ? "stddev" : "variance"}};
    }
    sidecar["provenance"] = provenance();
    write("cfes.json", sidecar.dump(2) + "\n");
    write_provenance({{"recourse", recourse_json(cfg)}, {"method", method_}});
    std::size_t feasible = 0;
    for (const CfeResult& r : g.results) feasible += r.feasible ? 1 : 0;
    out_ << method_ << ": " << g.results.size() << " negatives, " << feasible << " feasible\n";
    return kExitOk;
  }

  struct Pipeline {
    Classifier model;
    Dataset train;
    Dataset test;
    InfluenceCache cache;
    std::vector<std::size_t> ids;
    std::vector<Eigen::VectorXd> xs;
  };

  Pipeline load_pipeline() {
    Pipeline p{load_model(in_.model), load_dataset(in_.train, "train"), load_dataset(in_.test, "test"), {}, {}, {}};
    p.cache = obtain_cache(p.model, in_, &p.train, model_.damping);
    p.ids = negative_indices(p.model, p.test);
    p.xs = rows_of(p.test, p.ids);
    return p;
  }

  std::vector<MethodCfes> generate_all(const Pipeline& p, const RocerfConfig& cfg) {
    std::vector<MethodCfes> out;
    for (const std::string& m : methods_) {
      if (std::find(kMethods.begin(), kMethods.end(), m) == kMethods.end()) {
        throw Error(ErrorKind::kConfigError, "methods: unknown method '" + m + "'");
      }
      out.push_back({m, generate(m, p.model, &p.cache, &p.train, p.xs, cfg,
                                 make_surrogate_settings(rec_, global_.seed, p.train), global_.workers)
                            .results});
    }
    return out;
  }

  int cmd_evaluate() {
    const Pipeline p = load_pipeline();
    const std::size_t k = resolve_k(rec_, p.train.n());
    const RocerfConfig cfg = make_rocerf_config(rec_, k, p.train);
    const std::vector<MethodCfes> methods = generate_all(p, cfg);
    EvalReport report;
    for (double alpha : alphas_) {
      TrialSpec spec;
      spec.alpha = alpha;
      spec.M = M_;
      spec.seed = global_.seed;
      spec.train_config = retrain_config_of(p.model, model_);
      spec.workers = global_.workers;
      report.append(run_removal_trials(p.train, spec, methods));
    }
    const json prov = provenance({{"recourse", recourse_json(cfg)}, {"negatives", p.xs.size()}});
    write("report.csv", eval_report_csv(report));
    write("report.json", eval_report_json(report, prov.dump()));
    write_provenance({{"recourse", recourse_json(cfg)}});
    out_ << eval_report_csv(report);
    return kExitOk;
  }

  int cmd_oracle() {
    const Pipeline p = load_pipeline();
    const std::size_t k = resolve_k(rec_, p.train.n());
    const RocerfConfig cfg = make_rocerf_config(rec_, k, p.train);
    const std::vector<MethodCfes> methods = generate_all(p, cfg);
    const OracleReport r = exhaustive_validity_oracle(p.train, k, methods, retrain_config_of(p.model, model_), cap_,
                                                      global_.workers);
    json items = json::array();
    for (const OracleMethodResult& m : r.methods) {
      items.push_back({{"method", m.method}, {"worst_validity", m.worst_validity}, {"witness", m.witness}});
      out_ << m.method << " worst-case validity " << format_number(m.worst_validity) << "\n";
    }
    json doc{{"format", "rocerf-oracle"}, {"version", 1},         {"k", r.k},
             {"retrains", r.retrains},    {"skipped", r.skipped_masks}, {"methods", items}};
    doc["provenance"] = provenance({{"recourse", recourse_json(cfg)}});
    write("oracle.json", doc.dump(2) + "\n");
    write_provenance({{"recourse", recourse_json(cfg)}});
    return kExitOk;
  }

  int cmd_sweep() {
    const Pipeline p = load_pipeline();
    std::vector<std::size_t> ks = k_values_;
    for (double f : k_fractions_) {
      RecourseOptions r = rec_;
      r.k.reset();
      r.k_fraction = f;
      ks.push_back(resolve_k(r, p.train.n()));
    }
    if (ks.empty()) throw Error(ErrorKind::kConfigError, "sweep-k needs --k-values or --k-fractions");
    std::vector<std::vector<CfeResult>> cfes;
    for (std::size_t k : ks) {
      if (k > p.train.n()) throw Error(ErrorKind::kKTooLarge, "k-values: " + std::to_string(k) + " exceeds n");
      const RocerfConfig cfg = make_rocerf_config(rec_, k, p.train);
      cfes.push_back(batch_explain(p.model, &p.cache, p.xs, Method::kRocerf, cfg, global_.workers));
    }
    TrialSpec base;
    base.M = M_;
    base.seed = global_.seed;
    base.train_config = retrain_config_of(p.model, model_);
    base.workers = global_.workers;
    const SweepReport s = k_sensitivity_sweep(p.train, ks, alphas_, cfes, base);
    std::ostringstream csv;
    csv << "k,alpha,validity_mean\n";
    for (std::size_t i = 0; i < ks.size(); ++i) {
      for (std::size_t a = 0; a < alphas_.size(); ++a) {
        csv << ks[i] << ',' << format_number(alphas_[a]) << ',' << format_number(s.validity[i][a]) << '\n';
      }
    }
    json doc{{"format", "rocerf-sweep"}, {"version", 1},         {"k_values", ks},
             {"alphas", alphas_},        {"validity", s.validity}, {"pattern_holds", s.pattern_holds},
             {"violations", s.violations}};
    doc["provenance"] = provenance();
    write("sweep.csv", csv.str());
    write("sweep.json", doc.dump(2) + "\n");
    write_provenance();
    out_ << csv.str() << "pattern " << (s.pattern_holds ? "holds" : "violated") << "\n";
    return kExitOk;
  }

  int cmd_estimate_delta() {
    const Classifier model = load_model(in_.model);
    const Dataset train = load_dataset(in_.train, "train");
    const Dataset val = load_dataset(in_.val, "val");
    const InfluenceCache cache = obtain_cache(model, in_, &train, model_.damping);
    const std::size_t k = resolve_k(rec_, train.n());
    std::vector<Eigen::VectorXd> xs;
    for (std::size_t i = 0; i < val.n(); ++i) xs.push_back(val.row(i));
    const DeltaEstimate d = estimate_delta(train, xs, model, cache, retrain_config_of(model, model_), k, n_sim_,
                                           global_.seed, safety_, global_.workers);
    json doc{{"format", "rocerf-delta"}, {"version", 1}, {"k", k}, {"n_sim", d.simulations}, {"adversarial_masks", d.adversarial},
             {"max_error", d.max_error}, {"safety_factor", safety_}, {"delta", d.delta}};
    doc["provenance"] = provenance();
    write("delta.json", doc.dump(2) + "\n");
    write_provenance();
    out_ << "delta " << format_number(d.delta) << "\n";
    return kExitOk;
  }

  int cmd_verify();

  std::ostream& out_;
  std::ostream& err_;
  std::vector<std::string> argv_;
  std::string command_;
  std::string config_text_;
  GlobalOptions global_;
  ModelOptions model_;
  RecourseOptions rec_;
  Inputs in_;
  SplitSpec split_;
  bool no_bias_ = false;
  std::string method_ = "rocerf";
  std::vector<std::string> methods_{"scfe", "rocerf"};
  std::vector<double> alphas_{0.005, 0.01, 0.02, 0.03, 0.05};
  std::size_t M_ = 100;
  std::uint64_t cap_ = 20000;
  std::vector<std::size_t> k_values_;
  std::vector<double> k_fractions_;
  std::size_t n_sim_ = 20;
  double safety_ = 1.5;
  std::size_t verify_k_ = 2;
};

struct Check {
  std::string name;
  std::function<bool(std::string&)> run;
};

int Runner::cmd_verify() {
  const std::size_t n_per_class = 20;
  if (verify_k_ > 2 * n_per_class) {
    throw Error(ErrorKind::kKTooLarge,
                "k = " + std::to_string(verify_k_) + " exceeds n = " + std::to_string(2 * n_per_class));
  }
  if (!in_.cache.empty()) (void)load_influence_cache(in_.cache);

  const Dataset train = make_synthetic_gaussians(n_per_class, 2, 3.0, global_.seed);
  LogRegConfig lr;
  lr.gamma = 0.1;
  const Classifier model = rocerf::train(train, lr);
  const InfluenceCache cache = build_influence_cache(model, train, build_hessian_factor(model, train, 0.0));
  const Dataset test = make_synthetic_gaussians(50, 2, 3.0, derive_seed(global_.seed, 7));
  const std::vector<Eigen::VectorXd> negatives = rows_of(test, negative_indices(model, test));

  std::vector<Check> checks;
  checks.push_back({"per-sample gradient matches finite differences", [&](std::string& detail) {
                      double worst = 0.0;
                      const Eigen::VectorXd theta = parameters(model);
                      for (std::size_t i = 0; i < 5; ++i) {
                        const Eigen::VectorXd g = per_sample_gradient(model, train, i);
                        for (Eigen::Index j = 0; j < theta.size(); ++j) {
                          Eigen::VectorXd tp = theta, tm = theta;
                          tp(j) += 1e-6;
                          tm(j) -= 1e-6;
                          const double fd = (per_sample_loss(with_parameters(model, tp), train, i) -
                                             per_sample_loss(with_parameters(model, tm), train, i)) /
                                            2e-6;
                          worst = std::max(worst, std::abs(fd - g(j)) / std::max(1e-8, std::abs(g(j))));
                        }
                      }
                      detail = "max relative error " + format_number(worst);
                      return worst < 1e-4;
                    }});
  checks.push_back({"bottom-k sum equals brute force", [&](std::string& detail) {
                      Rng rng(derive_seed(global_.seed, 11));
                      for (int trial = 0; trial < 50; ++trial) {
                        const std::size_t n = 1 + rng.uniform_index(10);
                        const std::size_t k = rng.uniform_index(std::min<std::size_t>(n, 4) + 1);
                        std::vector<double> v(n);
                        for (double& x : v) x = rng.normal();
                        std::vector<double> sorted = v;
                        std::sort(sorted.begin(), sorted.end());
                        double expect = 0.0;
                        for (std::size_t i = 0; i < k; ++i) expect += sorted[i];
                        if (std::abs(bottom_k_sum(v, k).sum - expect) > 1e-12) {
                          detail = "mismatch at trial " + std::to_string(trial);
                          return false;
                        }
                      }
                      return true;
                    }});
  checks.push_back({"rocerf with k=0 equals scfe bitwise", [&](std::string& detail) {
                      RocerfConfig cfg;
                      if (train.bias_column) cfg.domain.fixed.push_back(*train.bias_column);
                      for (const Eigen::VectorXd& x : negatives) {
                        const CfeResult a = scfe(model, x, cfg);
                        const CfeResult b = rocerf(model, cache, x, cfg);
                        if (a.x_cf != b.x_cf) {
                          detail = "x_cf differs";
                          return false;
                        }
                      }
                      detail = std::to_string(negatives.size()) + " negatives";
                      return true;
                    }});
  checks.push_back({"influence cache round-trips", [&](std::string& detail) {
                      const InfluenceCache back = decode_influence_cache(encode_influence_cache(cache), "memory");
                      detail = "n=" + std::to_string(back.n());
                      return back.vectors == cache.vectors && back.theta_hat == cache.theta_hat;
                    }});
  checks.push_back({"exhaustive oracle: rocerf valid under every k-removal", [&](std::string& detail) {
                      std::vector<Eigen::VectorXd> xs;
                      for (std::size_t i = 0; i < std::min<std::size_t>(10, negatives.size()); ++i) xs.push_back(negatives[i]);
                      const DeltaEstimate d = estimate_delta(train, xs, model, cache, lr, verify_k_, 50,
                                                             derive_seed(global_.seed, 3), 1.5, global_.workers);
                      RocerfConfig cfg;
                      cfg.k = verify_k_;
                      cfg.delta = d.delta;
                      const std::vector<MethodCfes> m{
                          {"rocerf", batch_explain(model, &cache, xs, Method::kRocerf, cfg, global_.workers)}};
                      const OracleReport r = exhaustive_validity_oracle(train, verify_k_, m, lr, 20000, global_.workers);
                      detail = std::to_string(r.retrains) + " retrains, worst validity " +
                               format_number(r.methods[0].worst_validity);
                      return r.methods[0].worst_validity == 1.0;
                    }});

  bool all = true;
  std::string first_failure;
  for (const Check& c : checks) {
    std::string detail;
    bool ok = false;
    try {
      ok = c.run(detail);
    } catch (const Error& e) {
      detail = e.what();
    }
    out_ << (ok ? "PASS  " : "FAIL  ") << c.name << (detail.empty() ? "" : "  (" + detail + ")") << "\n";
    if (!ok && all) first_failure = c.name;
    all = all && ok;
  }
  if (!all) {
    return report_error(std::nullopt, "verify failed: " + first_failure, kExitRuntime);
  }
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Runner runner(argc, argv, out, err);
  return runner.run();
}

}  // namespace rocerf::cli
