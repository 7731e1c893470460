#include "rocerf/models.hpp"

#include <cmath>
#include <json.hpp>
#include <numeric>

#include "mlp_kernel.hpp"
#include "rocerf/error.hpp"
#include "rocerf/rng.hpp"

namespace rocerf {

using detail::Dual;
using detail::MlpTape;

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void check_dim(const Classifier& model, const Eigen::VectorXd& x) {
  if (static_cast<std::size_t>(x.size()) != input_dim(model)) {
    throw Error(ErrorKind::kDimensionMismatch,
                "feature vector has length " + std::to_string(x.size()) + ", model expects " +
                    std::to_string(input_dim(model)));
  }
}

void check_index(const Dataset& train, std::size_t i) {
  if (i >= train.n()) {
    throw Error(ErrorKind::kIndexOutOfRange,
                "training index " + std::to_string(i) + " >= n = " + std::to_string(train.n()));
  }
}

void require_both_classes(const Dataset& train) {
  if (train.n() == 0) throw Error(ErrorKind::kEmptyTrainingSet, "training set is empty");
  if (!train.has_both_classes()) {
    throw Error(ErrorKind::kDegenerateLabels, "training set contains a single class");
  }
}

// d/df log(1 + exp(-y f)) = -y sigma(-y f)
template <typename T>
T logistic_loss_slope(T f, int y) {
  const double yd = y;
  return detail::make_scalar<T>(-yd) * detail::sigmoid(detail::make_scalar<T>(-yd) * f);
}

double mlp_score(const MlpClassifier& m, const Eigen::VectorXd& x) {
  MlpTape<double> tape;
  return detail::mlp_forward(m.shape, m.params.data(), x.data(), tape);
}

// Gradient of the logistic part of sample loss i (no gamma term), accumulated.
void mlp_add_loss_gradient(const MlpClassifier& m, const Eigen::VectorXd& x, int y,
                           double weight, Eigen::VectorXd& grad) {
  MlpTape<double> tape;
  const double f = detail::mlp_forward(m.shape, m.params.data(), x.data(), tape);
  detail::mlp_backward(m.shape, m.params.data(), tape, weight * logistic_loss_slope(f, y),
                       grad.data(), static_cast<double*>(nullptr));
}

struct LogisticState {
  double loss;
  Eigen::VectorXd gradient;
  Eigen::VectorXd curvature;  // sigma(m)(1 - sigma(m)) per row
};

LogisticState logistic_state(const Eigen::VectorXd& theta, double gamma, const Dataset& train,
                             bool want_curvature) {
  const Eigen::VectorXd margins = train.features * theta;
  const auto n = static_cast<double>(train.n());
  LogisticState s;
  s.loss = 0.0;
  Eigen::VectorXd weights(margins.size());
  if (want_curvature) s.curvature.resize(margins.size());
  for (Eigen::Index r = 0; r < margins.size(); ++r) {
    const double y = train.labels[static_cast<std::size_t>(r)];
    s.loss += detail::softplus(-y * margins(r));
    weights(r) = -y * detail::sigmoid(-y * margins(r));
    if (want_curvature) {
      const double p = detail::sigmoid(margins(r));
      s.curvature(r) = p * (1.0 - p);
    }
  }
  s.loss = s.loss / n + 0.5 * gamma * theta.squaredNorm();
  s.gradient = train.features.transpose() * weights / n + gamma * theta;
  return s;
}

}  // namespace

std::size_t MlpShape::param_count() const {
  std::size_t count = 0;
  std::size_t in = input_dim;
  for (std::size_t l = 0; l < hidden_layers; ++l) {
    count += in * hidden_width + hidden_width;
    in = hidden_width;
  }
  return count + in + 1;
}

MlpClassifier MlpClassifier::initialized(const MlpShape& shape, std::uint64_t seed) {
  MlpClassifier m;
  m.shape = shape;
  m.params = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(shape.param_count()));
  Rng rng(seed);
  std::size_t offset = 0;
  std::size_t in = shape.input_dim;
  auto fill = [&](std::size_t fan_in, std::size_t fan_out) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (std::size_t j = 0; j < fan_in * fan_out; ++j) {
      m.params(static_cast<Eigen::Index>(offset + j)) = limit * (2.0 * rng.uniform() - 1.0);
    }
    offset += fan_in * fan_out + fan_out;  // biases stay zero
  };
  for (std::size_t l = 0; l < shape.hidden_layers; ++l) {
    fill(in, shape.hidden_width);
    in = shape.hidden_width;
  }
  fill(in, 1);
  return m;
}

std::size_t input_dim(const Classifier& model) {
  return std::visit(Overloaded{
                        [](const LinearClassifier& m) { return static_cast<std::size_t>(m.theta.size()); },
                        [](const MlpClassifier& m) { return m.shape.input_dim; },
                    },
                    model);
}

std::size_t param_count(const Classifier& model) {
  return static_cast<std::size_t>(parameters(model).size());
}

const Eigen::VectorXd& parameters(const Classifier& model) {
  if (const auto* lin = std::get_if<LinearClassifier>(&model)) return lin->theta;
  return std::get<MlpClassifier>(model).params;
}

double regularization(const Classifier& model) {
  return std::visit([](const auto& m) { return m.gamma; }, model);
}

bool is_linear(const Classifier& model) {
  return std::holds_alternative<LinearClassifier>(model);
}

Classifier with_parameters(const Classifier& model, const Eigen::VectorXd& params) {
  if (static_cast<std::size_t>(params.size()) != param_count(model)) {
    throw Error(ErrorKind::kSizeMismatch, "parameter vector has the wrong length");
  }
  Classifier out = model;
  std::visit(Overloaded{
                 [&](LinearClassifier& m) { m.theta = params; },
                 [&](MlpClassifier& m) { m.params = params; },
             },
             out);
  return out;
}

double score(const Classifier& model, const Eigen::VectorXd& x) {
  check_dim(model, x);
  return std::visit(Overloaded{
                        [&](const LinearClassifier& m) { return m.theta.dot(x); },
                        [&](const MlpClassifier& m) { return mlp_score(m, x); },
                    },
                    model);
}

double accuracy(const Classifier& model, const Dataset& data) {
  if (data.n() == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.n(); ++i) {
    if (predict(model, data.row(i)) == data.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.n());
}

Eigen::VectorXd param_gradient(const Classifier& model, const Eigen::VectorXd& x) {
  check_dim(model, x);
  return std::visit(Overloaded{
                        [&](const LinearClassifier&) -> Eigen::VectorXd { return x; },
                        [&](const MlpClassifier& m) -> Eigen::VectorXd {
                          MlpTape<double> tape;
                          detail::mlp_forward(m.shape, m.params.data(), x.data(), tape);
                          Eigen::VectorXd grad = Eigen::VectorXd::Zero(m.params.size());
                          detail::mlp_backward(m.shape, m.params.data(), tape, 1.0, grad.data(),
                                               static_cast<double*>(nullptr));
                          return grad;
                        },
                    },
                    model);
}

Eigen::VectorXd input_gradient(const Classifier& model, const Eigen::VectorXd& x) {
  check_dim(model, x);
  return std::visit(Overloaded{
                        [&](const LinearClassifier& m) -> Eigen::VectorXd { return m.theta; },
                        [&](const MlpClassifier& m) -> Eigen::VectorXd {
                          MlpTape<double> tape;
                          detail::mlp_forward(m.shape, m.params.data(), x.data(), tape);
                          Eigen::VectorXd grad = Eigen::VectorXd::Zero(x.size());
                          detail::mlp_backward(m.shape, m.params.data(), tape, 1.0,
                                               static_cast<double*>(nullptr), grad.data());
                          return grad;
                        },
                    },
                    model);
}

Eigen::VectorXd input_gradient_of_param_directional(const Classifier& model,
                                                    const Eigen::VectorXd& x,
                                                    const Eigen::VectorXd& direction) {
  check_dim(model, x);
  if (static_cast<std::size_t>(direction.size()) != param_count(model)) {
    throw Error(ErrorKind::kSizeMismatch, "direction must live in parameter space");
  }
  // Linear: beta(x) . u = x . u, so the gradient is u.
  if (is_linear(model)) return direction;
  const auto& m = std::get<MlpClassifier>(model);
  std::vector<Dual> params(static_cast<std::size_t>(m.params.size()));
  for (std::size_t j = 0; j < params.size(); ++j) {
    params[j] = {m.params(static_cast<Eigen::Index>(j)), direction(static_cast<Eigen::Index>(j))};
  }
  std::vector<Dual> xs(static_cast<std::size_t>(x.size()));
  for (std::size_t j = 0; j < xs.size(); ++j) xs[j] = {x(static_cast<Eigen::Index>(j)), 0.0};
  MlpTape<Dual> tape;
  detail::mlp_forward(m.shape, params.data(), xs.data(), tape);
  std::vector<Dual> dx(xs.size());
  detail::mlp_backward(m.shape, params.data(), tape, Dual{1.0, 0.0}, static_cast<Dual*>(nullptr),
                       dx.data());
  Eigen::VectorXd out(x.size());
  for (std::size_t j = 0; j < dx.size(); ++j) out(static_cast<Eigen::Index>(j)) = dx[j].d;
  return out;
}

double per_sample_loss(const Classifier& model, const Dataset& train, std::size_t i) {
  check_index(train, i);
  const Eigen::VectorXd x = train.row(i);
  const double y = train.labels[i];
  const double f = score(model, x);
  return detail::softplus(-y * f) + 0.5 * regularization(model) * parameters(model).squaredNorm();
}

Eigen::VectorXd per_sample_gradient(const Classifier& model, const Dataset& train, std::size_t i) {
  check_index(train, i);
  const Eigen::VectorXd x = train.row(i);
  const int y = train.labels[i];
  const double gamma = regularization(model);
  return std::visit(
      Overloaded{
          [&](const LinearClassifier& m) -> Eigen::VectorXd {
            const double coeff = -static_cast<double>(y) * detail::sigmoid(-y * m.theta.dot(x));
            return coeff * x + gamma * m.theta;
          },
          [&](const MlpClassifier& m) -> Eigen::VectorXd {
            Eigen::VectorXd grad = gamma * m.params;
            mlp_add_loss_gradient(m, x, y, 1.0, grad);
            return grad;
          },
      },
      model);
}

double training_loss(const Classifier& model, const Dataset& train) {
  if (const auto* lin = std::get_if<LinearClassifier>(&model)) {
    return logistic_state(lin->theta, lin->gamma, train, false).loss;
  }
  double total = 0.0;
  for (std::size_t i = 0; i < train.n(); ++i) {
    const double y = train.labels[i];
    total += detail::softplus(-y * score(model, train.row(i)));
  }
  return total / static_cast<double>(train.n()) +
         0.5 * regularization(model) * parameters(model).squaredNorm();
}

Eigen::VectorXd training_gradient(const Classifier& model, const Dataset& train) {
  if (const auto* lin = std::get_if<LinearClassifier>(&model)) {
    return logistic_state(lin->theta, lin->gamma, train, false).gradient;
  }
  const auto& m = std::get<MlpClassifier>(model);
  Eigen::VectorXd grad = m.gamma * m.params;
  const double w = 1.0 / static_cast<double>(train.n());
  for (std::size_t i = 0; i < train.n(); ++i) {
    mlp_add_loss_gradient(m, train.row(i), train.labels[i], w, grad);
  }
  return grad;
}

Eigen::VectorXd hessian_vector_product(const Classifier& model, const Dataset& train,
                                       const Eigen::VectorXd& v) {
  if (static_cast<std::size_t>(v.size()) != param_count(model)) {
    throw Error(ErrorKind::kSizeMismatch, "vector must live in parameter space");
  }
  if (const auto* lin = std::get_if<LinearClassifier>(&model)) {
    return logistic_hessian(lin->theta, lin->gamma, train) * v;
  }
  const auto& m = std::get<MlpClassifier>(model);
  const std::size_t p = static_cast<std::size_t>(m.params.size());
  std::vector<Dual> params(p);
  for (std::size_t j = 0; j < p; ++j) {
    params[j] = {m.params(static_cast<Eigen::Index>(j)), v(static_cast<Eigen::Index>(j))};
  }
  std::vector<Dual> grad(p);
  std::vector<Dual> xs(train.d());
  MlpTape<Dual> tape;
  const double w = 1.0 / static_cast<double>(train.n());
  for (std::size_t i = 0; i < train.n(); ++i) {
    for (std::size_t j = 0; j < xs.size(); ++j) {
      xs[j] = {train.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)), 0.0};
    }
    const Dual f = detail::mlp_forward(m.shape, params.data(), xs.data(), tape);
    const Dual slope = logistic_loss_slope(f, train.labels[i]) * Dual{w, 0.0};
    detail::mlp_backward(m.shape, params.data(), tape, slope, grad.data(),
                         static_cast<Dual*>(nullptr));
  }
  Eigen::VectorXd out(static_cast<Eigen::Index>(p));
  for (std::size_t j = 0; j < p; ++j) out(static_cast<Eigen::Index>(j)) = grad[j].d;
  return out + m.gamma * v;
}

Eigen::MatrixXd logistic_hessian(const Eigen::VectorXd& theta, double gamma, const Dataset& train) {
  const LogisticState s = logistic_state(theta, gamma, train, true);
  const auto n = static_cast<double>(train.n());
  Eigen::MatrixXd h = train.features.transpose() * s.curvature.asDiagonal() * train.features / n;
  h.diagonal().array() += gamma;
  return h;
}

LinearClassifier train_logreg(const Dataset& train, const LogRegConfig& config) {
  require_both_classes(train);
  const double gamma = config.gamma.value_or(1.0 / static_cast<double>(train.n()));
  if (!(gamma > 0.0)) throw Error(ErrorKind::kInvalidArgument, "gamma must be > 0");

  LinearClassifier model;
  model.gamma = gamma;
  model.theta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(train.d()));
  LogisticState state = logistic_state(model.theta, gamma, train, true);
  std::size_t iter = 0;
  for (; iter < config.max_iters && state.gradient.norm() > config.newton_tol; ++iter) {
    Eigen::MatrixXd h = train.features.transpose() * state.curvature.asDiagonal() *
                        train.features / static_cast<double>(train.n());
    h.diagonal().array() += gamma;
    const Eigen::VectorXd step = h.llt().solve(state.gradient);
    // Halve the step until the loss does not increase beyond rounding.
    double t = 1.0;
    Eigen::VectorXd candidate;
    LogisticState next;
    for (int halving = 0; halving < 60; ++halving, t *= 0.5) {
      candidate = model.theta - t * step;
      next = logistic_state(candidate, gamma, train, true);
      if (next.loss <= state.loss + 1e-15 * std::abs(state.loss)) break;
    }
    if (!(next.loss <= state.loss + 1e-15 * std::abs(state.loss))) break;
    model.theta = candidate;
    state = std::move(next);
  }
  model.iterations = iter;
  model.gradient_norm = state.gradient.norm();
  if (!(model.gradient_norm <= config.newton_tol)) {
    throw Error(ErrorKind::kNonConvergence,
                "Newton stopped after " + std::to_string(iter) +
                    " iterations with gradient norm " + std::to_string(model.gradient_norm));
  }
  return model;
}

MlpClassifier train_mlp(const Dataset& train, const MlpConfig& config) {
  require_both_classes(train);
  if (config.batch_size == 0 || config.hidden_layers == 0 || config.width_multiplier == 0) {
    throw Error(ErrorKind::kInvalidArgument, "batch size, depth and width must be positive");
  }
  MlpShape shape{train.d(), config.width_multiplier * train.d(), config.hidden_layers};
  MlpClassifier model = MlpClassifier::initialized(shape, derive_seed(config.seed, 0));
  model.gamma = config.gamma;
  model.config = config;

  Rng rng(derive_seed(config.seed, 1));
  std::vector<std::size_t> order(train.n());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Eigen::VectorXd grad(model.params.size());
  std::vector<Eigen::VectorXd> rows(train.n());
  for (std::size_t i = 0; i < train.n(); ++i) rows[i] = train.row(i);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const double w = 1.0 / static_cast<double>(end - start);
      grad = config.gamma * model.params;
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t i = order[b];
        MlpTape<double> tape;
        const double f = detail::mlp_forward(shape, model.params.data(), rows[i].data(), tape);
        epoch_loss += detail::softplus(-train.labels[i] * f);
        detail::mlp_backward(shape, model.params.data(), tape,
                             w * logistic_loss_slope(f, train.labels[i]), grad.data(),
                             static_cast<double*>(nullptr));
      }
      model.params -= config.learning_rate * grad;
    }
    epoch_loss /= static_cast<double>(train.n());
    if (!std::isfinite(epoch_loss) || !model.params.allFinite()) {
      throw Error(ErrorKind::kDivergedLoss, "loss diverged in epoch " + std::to_string(epoch));
    }
    model.final_loss = epoch_loss;
  }
  return model;
}

Classifier train(const Dataset& train, const TrainConfig& config) {
  return std::visit(Overloaded{
                        [&](const LogRegConfig& c) -> Classifier { return train_logreg(train, c); },
                        [&](const MlpConfig& c) -> Classifier { return train_mlp(train, c); },
                    },
                    config);
}

std::string model_to_json(const Classifier& model) {
  nlohmann::json doc;
  doc["format"] = "rocerf-model";
  doc["version"] = 1;
  doc["input_dim"] = input_dim(model);
  doc["param_count"] = param_count(model);
  doc["gamma"] = regularization(model);
  const Eigen::VectorXd& params = parameters(model);
  doc["params"] = std::vector<double>(params.data(), params.data() + params.size());
  std::visit(Overloaded{
                 [&](const LinearClassifier& m) {
                   doc["family"] = "logistic_regression";
                   doc["training"] = {{"newton_iterations", m.iterations},
                                      {"gradient_norm", m.gradient_norm}};
                 },
                 [&](const MlpClassifier& m) {
                   doc["family"] = "mlp";
                   doc["hidden_width"] = m.shape.hidden_width;
                   doc["hidden_layers"] = m.shape.hidden_layers;
                   doc["activation"] = "centered_softplus";
                   doc["training"] = {{"learning_rate", m.config.learning_rate},
                                      {"epochs", m.config.epochs},
                                      {"batch_size", m.config.batch_size},
                                      {"seed", m.config.seed},
                                      {"width_multiplier", m.config.width_multiplier},
                                      {"final_loss", m.final_loss}};
                 },
             },
             model);
  return doc.dump(2) + "\n";
}

Classifier model_from_json(const std::string& text, const std::string& origin) {
  try {
    const nlohmann::json doc = nlohmann::json::parse(text);
    if (doc.at("format") != "rocerf-model" || doc.at("version") != 1) {
      throw Error(ErrorKind::kCorruptFile, origin + ": not a version-1 rocerf model");
    }
    const std::vector<double> raw = doc.at("params").get<std::vector<double>>();
    Eigen::VectorXd params = Eigen::Map<const Eigen::VectorXd>(raw.data(), static_cast<Eigen::Index>(raw.size()));
    const double gamma = doc.at("gamma").get<double>();
    const auto dim = doc.at("input_dim").get<std::size_t>();
    if (doc.at("family") == "logistic_regression") {
      LinearClassifier m;
      m.theta = params;
      m.gamma = gamma;
      m.iterations = doc["training"].value("newton_iterations", std::size_t{0});
      m.gradient_norm = doc["training"].value("gradient_norm", 0.0);
      if (static_cast<std::size_t>(m.theta.size()) != dim) {
        throw Error(ErrorKind::kCorruptFile, origin + ": parameter count mismatch");
      }
      return m;
    }
    if (doc.at("family") == "mlp") {
      MlpClassifier m;
      m.shape = {dim, doc.at("hidden_width").get<std::size_t>(),
                 doc.at("hidden_layers").get<std::size_t>()};
      m.params = params;
      m.gamma = gamma;
      const auto& t = doc.at("training");
      m.config.learning_rate = t.value("learning_rate", m.config.learning_rate);
      m.config.epochs = t.value("epochs", m.config.epochs);
      m.config.batch_size = t.value("batch_size", m.config.batch_size);
      m.config.seed = t.value("seed", m.config.seed);
      m.config.width_multiplier = t.value("width_multiplier", m.config.width_multiplier);
      m.config.hidden_layers = m.shape.hidden_layers;
      m.config.gamma = gamma;
      m.final_loss = t.value("final_loss", 0.0);
      if (m.shape.param_count() != static_cast<std::size_t>(params.size())) {
        throw Error(ErrorKind::kCorruptFile, origin + ": parameter count mismatch");
      }
      return m;
    }
    throw Error(ErrorKind::kCorruptFile, origin + ": unknown model family");
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kCorruptFile, origin + ": " + e.what());
  }
}

}  // namespace rocerf
