#include <cmath>

#include "rocerf/error.hpp"
#include "rocerf/models.hpp"

namespace rocerf {

HessianFactor HessianFactor::dense(const Eigen::MatrixXd& hessian, double damping) {
  if (hessian.rows() != hessian.cols()) {
    throw Error(ErrorKind::kDimensionMismatch, "Hessian must be square");
  }
  if (!(damping >= 0.0)) throw Error(ErrorKind::kInvalidArgument, "damping must be >= 0");
  HessianFactor f;
  f.dim_ = static_cast<std::size_t>(hessian.rows());
  f.damping_ = damping;
  Dense d;
  d.matrix = hessian;
  d.matrix.diagonal().array() += damping;
  d.llt.compute(d.matrix);
  if (d.llt.info() != Eigen::Success) {
    throw Error(ErrorKind::kNotPositiveDefinite, "Cholesky factorization failed");
  }
  const Eigen::VectorXd pivots = Eigen::MatrixXd(d.llt.matrixL()).diagonal();
  if (!(pivots.array() > 0.0).all()) {
    throw Error(ErrorKind::kNotPositiveDefinite, "non-positive Cholesky pivot");
  }
  f.dense_ = std::move(d);
  return f;
}

HessianFactor HessianFactor::iterative(Operator hvp, std::size_t dim, double damping,
                                       CgSettings settings) {
  if (!(damping >= 0.0)) throw Error(ErrorKind::kInvalidArgument, "damping must be >= 0");
  HessianFactor f;
  f.hvp_ = std::move(hvp);
  f.dim_ = dim;
  f.damping_ = damping;
  f.cg_ = settings;
  return f;
}

const Eigen::MatrixXd& HessianFactor::matrix() const {
  if (!dense_) throw Error(ErrorKind::kInvalidArgument, "matrix-free factor has no dense matrix");
  return dense_->matrix;
}

Eigen::VectorXd HessianFactor::apply(const Eigen::VectorXd& v) const {
  if (static_cast<std::size_t>(v.size()) != dim_) {
    throw Error(ErrorKind::kDimensionMismatch, "vector length differs from Hessian dimension");
  }
  if (dense_) return dense_->matrix * v;
  return hvp_(v) + damping_ * v;
}

Eigen::VectorXd HessianFactor::solve(const Eigen::VectorXd& v) const {
  if (static_cast<std::size_t>(v.size()) != dim_) {
    throw Error(ErrorKind::kDimensionMismatch, "vector length differs from Hessian dimension");
  }
  if (dense_) {
    Eigen::VectorXd u = dense_->llt.solve(v);
    // One step of iterative refinement keeps the residual at ~1e-15 relative.
    u += dense_->llt.solve(v - dense_->matrix * u);
    return u;
  }
  const double target = cg_.relative_tolerance * v.norm();
  Eigen::VectorXd x = Eigen::VectorXd::Zero(v.size());
  if (v.norm() == 0.0) return x;
  Eigen::VectorXd r = v;
  Eigen::VectorXd p = r;
  double rr = r.squaredNorm();
  const std::size_t max_iters = cg_.max_iters != 0 ? cg_.max_iters : 10 * dim_ + 100;
  for (std::size_t it = 0; it < max_iters; ++it) {
    const Eigen::VectorXd ap = apply(p);
    const double curvature = p.dot(ap);
    if (!(curvature > 0.0)) {
      throw Error(ErrorKind::kCgNonConvergence,
                  "non-positive curvature after " + std::to_string(it) +
                      " CG iterations; increase the damping (now " + std::to_string(damping_) + ")");
    }
    const double alpha = rr / curvature;
    x += alpha * p;
    r -= alpha * ap;
    const double rr_next = r.squaredNorm();
    if (std::sqrt(rr_next) <= target) {
      // Recompute the true residual to guard against drift.
      const Eigen::VectorXd true_r = v - apply(x);
      if (true_r.norm() <= target) return x;
      r = true_r;
      p = r;
      rr = r.squaredNorm();
      continue;
    }
    p = r + (rr_next / rr) * p;
    rr = rr_next;
  }
  throw Error(ErrorKind::kCgNonConvergence,
              "CG did not reach relative residual " + std::to_string(cg_.relative_tolerance) +
                  " in " + std::to_string(max_iters) + " iterations");
}

HessianFactor build_hessian_factor(const Classifier& model, const Dataset& train, double damping,
                                   CgSettings cg) {
  if (train.d() != input_dim(model)) {
    throw Error(ErrorKind::kDimensionMismatch, "training data width differs from the model");
  }
  if (const auto* lin = std::get_if<LinearClassifier>(&model)) {
    return HessianFactor::dense(logistic_hessian(lin->theta, lin->gamma, train), damping);
  }
  // The factor outlives this call, so it owns copies of model and data.
  auto owned_model = std::make_shared<const Classifier>(model);
  auto owned_train = std::make_shared<const Dataset>(train);
  HessianFactor::Operator hvp = [owned_model, owned_train](const Eigen::VectorXd& v) {
    return hessian_vector_product(*owned_model, *owned_train, v);
  };
  return HessianFactor::iterative(std::move(hvp), param_count(model), damping, cg);
}

}  // namespace rocerf
