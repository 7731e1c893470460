#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <variant>

#include "rocerf/data.hpp"

namespace rocerf {

struct LogRegConfig {
  // L2 strength of the per-sample loss log(1 + exp(-y theta.x)) + gamma/2 |theta|^2.
  // Unset means 1/n, the per-sample equivalent of inverse regularization C = 1.
  std::optional<double> gamma;
  double newton_tol = 1e-10;
  std::size_t max_iters = 100;
};

struct MlpConfig {
  double learning_rate = 0.01;
  std::size_t epochs = 200;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  double gamma = 1e-3;
  std::size_t hidden_layers = 3;
  std::size_t width_multiplier = 2;
};

using TrainConfig = std::variant<LogRegConfig, MlpConfig>;

// f(x) = theta . x. There is no separate intercept; datasets carry an
// always-one column when one is wanted.
struct LinearClassifier {
  Eigen::VectorXd theta;
  double gamma = 0.0;
  std::size_t iterations = 0;
  double gradient_norm = 0.0;
};

struct MlpShape {
  std::size_t input_dim = 0;
  std::size_t hidden_width = 0;
  std::size_t hidden_layers = 3;

  // Sum over hidden layers of (in * out + out), plus the scalar head.
  std::size_t param_count() const;
};

// Fully connected net with centered-softplus hidden units,
// a(z) = log(1 + e^z) - log 2, and a scalar linear output head.
// Parameters are flattened layer by layer: W (row-major, out x in), then b;
// the head is its weight row followed by its bias.
struct MlpClassifier {
  MlpShape shape;
  Eigen::VectorXd params;
  double gamma = 0.0;
  MlpConfig config;
  double final_loss = 0.0;

  static MlpClassifier initialized(const MlpShape& shape, std::uint64_t seed);
};

using Classifier = std::variant<LinearClassifier, MlpClassifier>;

std::size_t input_dim(const Classifier& model);
std::size_t param_count(const Classifier& model);
const Eigen::VectorXd& parameters(const Classifier& model);
double regularization(const Classifier& model);
bool is_linear(const Classifier& model);
Classifier with_parameters(const Classifier& model, const Eigen::VectorXd& params);

double score(const Classifier& model, const Eigen::VectorXd& x);
inline int predict(const Classifier& model, const Eigen::VectorXd& x) {
  return score(model, x) >= 0.0 ? 1 : -1;
}
double accuracy(const Classifier& model, const Dataset& data);

// beta(x) = d f(x) / d theta. For the linear model this is x itself.
Eigen::VectorXd param_gradient(const Classifier& model, const Eigen::VectorXd& x);
// d f(x) / d x.
Eigen::VectorXd input_gradient(const Classifier& model, const Eigen::VectorXd& x);
// d/dx [beta(x) . direction].
Eigen::VectorXd input_gradient_of_param_directional(const Classifier& model,
                                                    const Eigen::VectorXd& x,
                                                    const Eigen::VectorXd& direction);

double per_sample_loss(const Classifier& model, const Dataset& train, std::size_t i);
Eigen::VectorXd per_sample_gradient(const Classifier& model, const Dataset& train,
                                    std::size_t i);
// Mean of the per-sample losses / gradients.
double training_loss(const Classifier& model, const Dataset& train);
Eigen::VectorXd training_gradient(const Classifier& model, const Dataset& train);
// H v with H the mean per-sample Hessian (gamma term included).
Eigen::VectorXd hessian_vector_product(const Classifier& model, const Dataset& train,
                                       const Eigen::VectorXd& v);

// Exact H = (1/n) sum sigma(1 - sigma) x x^T + gamma I for logistic regression.
Eigen::MatrixXd logistic_hessian(const Eigen::VectorXd& theta, double gamma,
                                 const Dataset& train);

LinearClassifier train_logreg(const Dataset& train, const LogRegConfig& config);
MlpClassifier train_mlp(const Dataset& train, const MlpConfig& config);
Classifier train(const Dataset& train, const TrainConfig& config);

struct CgSettings {
  double relative_tolerance = 1e-10;
  std::size_t max_iters = 0;  // 0 means 10 * dim + 100
};

// Solves (H + damping I) u = v, either with a dense Cholesky factor or by
// conjugate gradients on Hessian-vector products.
class HessianFactor {
 public:
  using Operator = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

  static HessianFactor dense(const Eigen::MatrixXd& hessian, double damping);
  static HessianFactor iterative(Operator hvp, std::size_t dim, double damping,
                                 CgSettings settings = {});

  Eigen::VectorXd solve(const Eigen::VectorXd& v) const;
  // (H + damping I) v
  Eigen::VectorXd apply(const Eigen::VectorXd& v) const;

  double damping() const { return damping_; }
  std::size_t dim() const { return dim_; }
  bool is_dense() const { return dense_.has_value(); }
  // Dense (H + damping I); only for the Cholesky variant.
  const Eigen::MatrixXd& matrix() const;

 private:
  struct Dense {
    Eigen::MatrixXd matrix;
    Eigen::LLT<Eigen::MatrixXd> llt;
  };
  std::optional<Dense> dense_;
  Operator hvp_;
  std::size_t dim_ = 0;
  double damping_ = 0.0;
  CgSettings cg_;
};

// Linear models: exact dense H, Cholesky-factored. MLP: matrix-free CG.
HessianFactor build_hessian_factor(const Classifier& model, const Dataset& train,
                                   double damping, CgSettings cg = {});

inline constexpr double kDefaultMlpDamping = 1e-2;

// Versioned JSON model document.
std::string model_to_json(const Classifier& model);
Classifier model_from_json(const std::string& text, const std::string& origin = "model");

}  // namespace rocerf
