#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "rocerf/error.hpp"
#include "rocerf/io.hpp"
#include "rocerf/unlearn.hpp"
#include "support.hpp"

using namespace rocerf;

namespace {

struct Fitted {
  Dataset train;
  Classifier model;
  InfluenceCache cache;
};

Fitted fit_linear(std::size_t n_per_class, std::size_t d, double sep, std::uint64_t seed, double gamma) {
  Fitted f;
  f.train = make_synthetic_gaussians(n_per_class, d, sep, seed);
  LogRegConfig c;
  c.gamma = gamma;
  f.model = train_logreg(f.train, c);
  f.cache = build_influence_cache(f.model, f.train, build_hessian_factor(f.model, f.train, 0.0));
  return f;
}

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an Error");
  return ErrorKind::kInvalidArgument;
}

}  // namespace

TEST_SUITE("unlearn") {
  TEST_CASE("cache rows equal a dense inverse applied to per-sample gradients") {
    const Fitted f = fit_linear(10, 3, 2.0, 1, 0.1);
    const auto& lin = std::get<LinearClassifier>(f.model);
    const Eigen::MatrixXd hinv = logistic_hessian(lin.theta, lin.gamma, f.train).fullPivLu().inverse();
    for (std::size_t i = 0; i < f.train.n(); ++i) {
      const Eigen::VectorXd expect = hinv * per_sample_gradient(f.model, f.train, i);
      CHECK(testing::relative_error(f.cache.vectors.row(static_cast<Eigen::Index>(i)).transpose(), expect) < 1e-10);
    }
    CHECK(f.cache.theta_hat == lin.theta);
  }

  TEST_CASE("approximate parameters and scores follow the first-order formula") {
    const Fitted f = fit_linear(8, 2, 2.0, 2, 0.1);
    const RemovalMask mask(f.train.n(), {3, 0, 9});
    const double n = static_cast<double>(f.train.n());
    Eigen::VectorXd expect = f.cache.theta_hat;
    for (std::size_t i : {0, 3, 9}) expect += f.cache.vectors.row(static_cast<Eigen::Index>(i)).transpose() / n;
    CHECK(testing::relative_error(approx_params(f.cache, mask), expect) < 1e-14);
    const Eigen::VectorXd x = Eigen::Vector2d(0.3, -1.2);
    CHECK(approx_score(f.cache, f.model, mask, x) == doctest::Approx(expect.dot(x)).epsilon(1e-12));
    CHECK(approx_score(f.cache, f.model, RemovalMask::none(f.train.n()), x) == doctest::Approx(score(f.model, x)));
  }

  TEST_CASE("bottom-k sum equals the subset brute force") {
    Rng rng(77);
    for (int instance = 0; instance < 200; ++instance) {
      const std::size_t n = 1 + rng.uniform_index(12);
      const std::size_t k = std::min(n, rng.uniform_index(5));
      std::vector<double> v(n);
      for (auto& x : v) x = rng.normal();
      double best = std::numeric_limits<double>::infinity();
      if (k == 0) best = 0.0;
      testing::for_each_subset(n, k, [&](const std::vector<std::size_t>& s) {
        double sum = 0.0;
        for (std::size_t i : s) sum += v[i];
        best = std::min(best, sum);
      });
      const BottomK b = bottom_k_sum(v, k);
      CHECK(std::abs(b.sum - best) <= 1e-12);
      CHECK(b.indices.size() == k);
      CHECK(std::is_sorted(b.indices.begin(), b.indices.end()));
    }
  }

  TEST_CASE("bottom-k ties go to the lower index and report a zero gap") {
    const std::vector<double> v{1.0, -2.0, 0.5, -2.0, -2.0};
    const BottomK b = bottom_k_sum(v, 2);
    CHECK(b.indices == std::vector<std::size_t>{1, 3});
    CHECK(b.sum == -4.0);
    CHECK(b.gap == 0.0);
    const BottomK c = bottom_k_sum(v, 3);
    CHECK(c.gap == doctest::Approx(2.5));
    CHECK(std::isinf(bottom_k_sum(v, 0).gap));
    CHECK(std::isinf(bottom_k_sum(v, 5).gap));
    CHECK(kind_of([&] { bottom_k_sum(v, 6); }) == ErrorKind::kKTooLarge);
  }

  TEST_CASE("robust score is the minimum approximate score over k-removals") {
    const Fitted f = fit_linear(6, 2, 1.5, 4, 0.05);
    Rng rng(5);
    for (int t = 0; t < 10; ++t) {
      const Eigen::VectorXd x = testing::random_vector(rng, 2);
      for (std::size_t k : {0, 1, 2, 3}) {
        double worst = std::numeric_limits<double>::infinity();
        testing::for_each_subset(f.train.n(), k, [&](const std::vector<std::size_t>& s) {
          worst = std::min(worst, approx_score(f.cache, f.model, RemovalMask(f.train.n(), s), x));
        });
        CHECK(robust_score(f.cache, f.model, x, k) == doctest::Approx(worst).epsilon(1e-12));
      }
    }
    CHECK(robust_score(f.cache, f.model, Eigen::Vector2d(1, 1), 0) == score(f.model, Eigen::Vector2d(1, 1)));
  }

  TEST_CASE("robust gradient matches finite differences away from selection ties") {
    const Fitted f = fit_linear(15, 3, 1.0, 6, 0.05);
    Rng rng(8);
    int checked = 0;
    for (int t = 0; t < 40 && checked < 20; ++t) {
      const Eigen::VectorXd x = testing::random_vector(rng, 3);
      const RobustValueGradient rv = robust_value_and_gradient(f.cache, f.model, x, 3);
      if (rv.selection.gap < 1e-4) continue;
      const Eigen::VectorXd fd = testing::numeric_gradient(
          [&](const Eigen::VectorXd& z) { return robust_score(f.cache, f.model, z, 3); }, x);
      CHECK(testing::relative_error(rv.gradient, fd) < 1e-6);
      CHECK(rv.value == robust_score(f.cache, f.model, x, 3));
      ++checked;
    }
    CHECK(checked >= 10);
  }

  TEST_CASE("robust gradient for an MLP matches finite differences") {
    const Dataset train = make_synthetic_gaussians(8, 2, 2.0, 3);
    MlpConfig c;
    c.epochs = 30;
    c.seed = 2;
    const Classifier model = train_mlp(train, c);
    const InfluenceCache cache = build_influence_cache(model, train, build_hessian_factor(model, train, 0.5));
    Rng rng(10);
    int checked = 0;
    for (int t = 0; t < 20 && checked < 5; ++t) {
      const Eigen::VectorXd x = testing::random_vector(rng, 2);
      const RobustValueGradient rv = robust_value_and_gradient(cache, model, x, 2);
      if (rv.selection.gap < 1e-4) continue;
      const Eigen::VectorXd fd =
          testing::numeric_gradient([&](const Eigen::VectorXd& z) { return robust_score(cache, model, z, 2); }, x);
      CHECK(testing::relative_error(rv.gradient, fd) < 1e-5);
      ++checked;
    }
    CHECK(checked >= 3);
  }

  TEST_CASE("first-order parameters track exact retraining") {
    const Fitted f = fit_linear(100, 3, 2.0, 9, 0.01);
    const RemovalMask mask(f.train.n(), {5, 17, 140});
    const Classifier exact = retrain_exact(f.train, mask, training_config_of(f.model));
    const Eigen::VectorXd shift = parameters(exact) - f.cache.theta_hat;
    const Eigen::VectorXd err = approx_params(f.cache, mask) - parameters(exact);
    CHECK(err.norm() < 0.1 * shift.norm());
  }

  TEST_CASE("retraining validates the mask") {
    const Fitted f = fit_linear(4, 2, 2.0, 1, 0.1);
    CHECK(kind_of([&] { retrain_exact(f.train, RemovalMask(3, {0}), training_config_of(f.model)); }) ==
          ErrorKind::kSizeMismatch);
    CHECK(kind_of([&] { retrain_exact(f.train, RemovalMask(8, {0, 2, 4, 6}), training_config_of(f.model)); }) ==
          ErrorKind::kDegenerateLabels);
  }

  TEST_CASE("mask validation") {
    CHECK(kind_of([] { RemovalMask(5, {1, 1}); }) == ErrorKind::kInvalidArgument);
    CHECK(kind_of([] { RemovalMask(5, {5}); }) == ErrorKind::kIndexOutOfRange);
    const RemovalMask m(4, {3, 1});
    CHECK(m.removed() == std::vector<std::size_t>{1, 3});
    CHECK(m.weights() == std::vector<double>{1, 0, 1, 0});
  }

  TEST_CASE("cache file round trip is exact and corruption is detected") {
    const Fitted f = fit_linear(5, 2, 2.0, 3, 0.1);
    const auto path = testing::temp_dir("cache") / "influence.bin";
    save_influence_cache(path, f.cache);
    const InfluenceCache back = load_influence_cache(path);
    CHECK(back.vectors == f.cache.vectors);
    CHECK(back.theta_hat == f.cache.theta_hat);
    CHECK(back.damping == f.cache.damping);

    std::string bytes = read_file(path);
    CHECK(bytes.size() == 40 + 8 * (2 + 10 * 2) + 8);
    CHECK(bytes.substr(0, 8) == "RCFINFL1");
    bytes[50] ^= 0x01;
    CHECK(kind_of([&] { decode_influence_cache(bytes, "x"); }) == ErrorKind::kCorruptFile);
    CHECK(kind_of([&] { decode_influence_cache(bytes.substr(0, 20), "x"); }) == ErrorKind::kCorruptFile);
    CHECK(kind_of([] { load_influence_cache("/nonexistent/cache.bin"); }) == ErrorKind::kMissingFile);
  }
}
