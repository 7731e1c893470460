#include <doctest.h>

#include <cmath>
#include <numeric>

#include "rocerf/error.hpp"
#include "rocerf/harness.hpp"
#include "rocerf/recourse.hpp"
#include "support.hpp"

using namespace rocerf;

namespace {

Classifier linear(std::initializer_list<double> w) {
  LinearClassifier m;
  m.theta = Eigen::Map<const Eigen::VectorXd>(w.begin(), static_cast<Eigen::Index>(w.size()));
  m.gamma = 0.1;
  return m;
}

struct Fitted {
  Dataset train;
  Dataset test;
  Classifier model;
  InfluenceCache cache;
};

Fitted fit(std::uint64_t seed) {
  Fitted f;
  f.train = make_synthetic_gaussians(50, 3, 2.0, seed);
  f.test = make_synthetic_gaussians(30, 3, 2.0, seed + 1000);
  f.model = train_logreg(f.train, {});
  f.cache = build_influence_cache(f.model, f.train, build_hessian_factor(f.model, f.train, 0.0));
  return f;
}

}  // namespace

TEST_SUITE("recourse") {
  TEST_CASE("hinge-squared penalty") {
    CHECK(penalty(-1.0) == 0.0);
    CHECK(penalty(0.0) == 0.0);
    CHECK(penalty(2.0) == 4.0);
  }

  TEST_CASE("zero lambda leaves x0 in place") {
    const Classifier m = linear({1.0, 0.0});
    const Eigen::Vector2d x0(-2.0, 0.0);
    PenaltyObjective obj{[&](const Eigen::VectorXd& x) { return ConstraintValue{score(m, x), input_gradient(m, x)}; },
                         x0, 0.0, 0.0, 1e-12};
    const InnerResult r = inner_minimize(obj, x0, {});
    CHECK(r.x == Eigen::VectorXd(x0));
    CHECK(r.converged);
  }

  TEST_CASE("axis-aligned and diagonal linear examples") {
    const CfeResult a = scfe(linear({1.0, 0.0}), Eigen::Vector2d(-2.0, 0.0));
    CHECK(a.feasible);
    CHECK((a.x_cf - Eigen::Vector2d(0.0, 0.0)).norm() < 1e-3);
    CHECK(a.cost_l2 == doctest::Approx(2.0).epsilon(1e-3));

    const CfeResult b = scfe(linear({0.6, 0.8}), Eigen::Vector2d(-0.6, -0.8));
    CHECK(b.feasible);
    CHECK(b.cost_l2 == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(b.cost_l1 == doctest::Approx(1.4).epsilon(1e-3));
  }

  TEST_CASE("large lambda lands next to the hyperplane projection") {
    const Classifier m = linear({1.0, 2.0});
    const Eigen::Vector2d x0(-1.0, -1.0);
    PenaltyObjective obj{[&](const Eigen::VectorXd& x) { return ConstraintValue{score(m, x), input_gradient(m, x)}; },
                         x0, 1e4, 0.0, 1e-12};
    const InnerResult r = inner_minimize(obj, x0, {});
    const Eigen::Vector2d theta(1.0, 2.0);
    const Eigen::Vector2d projection = x0 - (theta.dot(x0) / theta.squaredNorm()) * theta;
    CHECK((r.x - projection).norm() < 1e-3);
  }

  TEST_CASE("SCFE on logistic regression matches the closed-form distance") {
    const Fitted f = fit(3);
    const auto& theta = std::get<LinearClassifier>(f.model).theta;
    int checked = 0;
    for (std::size_t i : negative_indices(f.model, f.test)) {
      const Eigen::VectorXd x0 = f.test.row(i);
      const double closed = -score(f.model, x0) / theta.norm();
      const CfeResult r = scfe(f.model, x0);
      REQUIRE(r.feasible);
      CHECK(r.cost_l2 >= closed - 1e-9);
      CHECK(r.cost_l2 <= closed * (1 + 1e-4) + 1e-4 / theta.norm());
      ++checked;
    }
    CHECK(checked > 10);
  }

  TEST_CASE("positive inputs are rejected") {
    try {
      scfe(linear({1.0}), Eigen::VectorXd::Constant(1, 0.5));
      FAIL("expected NotNegativeSample");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kNotNegativeSample);
    }
  }

  TEST_CASE("k = 0 reproduces SCFE bit for bit") {
    const Fitted f = fit(5);
    RocerfConfig cfg;
    cfg.k = 0;
    for (std::size_t i : negative_indices(f.model, f.test)) {
      const Eigen::VectorXd x0 = f.test.row(i);
      const CfeResult a = scfe(f.model, x0);
      const CfeResult b = rocerf::rocerf(f.model, f.cache, x0, cfg);
      CHECK(a.x_cf == b.x_cf);
      CHECK(a.iterations == b.iterations);
    }
  }

  TEST_CASE("a cache of zero influence gives the SCFE answer") {
    Fitted f = fit(6);
    f.cache.vectors.setZero();
    RocerfConfig cfg;
    cfg.k = 4;
    const auto neg = negative_indices(f.model, f.test);
    REQUIRE(!neg.empty());
    for (std::size_t i : neg) {
      const Eigen::VectorXd x0 = f.test.row(i);
      CHECK((scfe(f.model, x0).x_cf - rocerf::rocerf(f.model, f.cache, x0, cfg).x_cf).norm() <= 1e-12);
    }
  }

  TEST_CASE("binary search brackets shrink and the answer is re-evaluated") {
    const Fitted f = fit(7);
    RocerfConfig cfg;
    cfg.k = 3;
    const std::size_t i = negative_indices(f.model, f.test).front();
    const CfeResult r = rocerf::rocerf(f.model, f.cache, f.test.row(i), cfg);
    REQUIRE(r.feasible);
    REQUIRE(r.trace.size() == cfg.T);
    for (std::size_t t = 0; t < r.trace.size(); ++t) {
      const SearchStep& s = r.trace[t];
      CHECK(s.lambda_mid == 0.5 * (s.lambda_left + s.lambda_right));
      if (t > 0) {
        CHECK(s.lambda_left >= r.trace[t - 1].lambda_left);
        CHECK(s.lambda_right <= r.trace[t - 1].lambda_right);
        CHECK((s.lambda_right - s.lambda_left) == doctest::Approx(0.5 * (r.trace[t - 1].lambda_right - r.trace[t - 1].lambda_left)));
      }
    }
    CHECK(r.constraint_value == robust_score(f.cache, f.model, r.x_cf, 3));
    CHECK(r.constraint_value >= 0.0);
    CHECK(r.cost_l2 == doctest::Approx((r.x_cf - r.x0).norm()));
  }

  TEST_CASE("an already robust x0 is returned unchanged") {
    const Classifier m = linear({1.0});
    const Eigen::VectorXd x0 = Eigen::VectorXd::Constant(1, -1.0);
    const CfeResult r = penalty_search(
        [&](const Eigen::VectorXd& x) { return ConstraintValue{score(m, x) + 5.0, input_gradient(m, x)}; }, x0, 0.0, {});
    CHECK(r.feasible);
    CHECK(r.x_cf == x0);
    CHECK(r.cost_l2 == 0.0);
  }

  TEST_CASE("batch generation isolates per-sample failures") {
    const Fitted f = fit(8);
    CHECK(batch_explain(f.model, &f.cache, {}, Method::kRocerf, {}).empty());

    auto neg = negative_indices(f.model, f.test);
    REQUIRE(neg.size() >= 20);
    neg.resize(20);
    std::vector<Eigen::VectorXd> inputs = rows_of(f.test, neg);
    RocerfConfig cfg;
    cfg.k = 2;
    const auto s = batch_explain(f.model, nullptr, inputs, Method::kScfe, cfg, 2);
    const auto r = batch_explain(f.model, &f.cache, inputs, Method::kRocerf, cfg, 2);
    double cs = 0.0, cr = 0.0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      CHECK(s[i].feasible);
      CHECK(r[i].feasible);
      cs += s[i].cost_l2;
      cr += r[i].cost_l2;
    }
    CHECK(cr >= cs);

    inputs.insert(inputs.begin() + 1, Eigen::Vector3d(5.0, 0.0, 0.0));
    const auto mixed = batch_explain(f.model, &f.cache, inputs, Method::kRocerf, cfg);
    REQUIRE(mixed.size() == 21);
    CHECK(mixed[1].error == std::optional<ErrorKind>(ErrorKind::kNotNegativeSample));
    CHECK_FALSE(mixed[1].feasible);
    CHECK(mixed[0].x_cf == r[0].x_cf);
    CHECK(mixed[2].x_cf == r[1].x_cf);

    CHECK_THROWS_AS(batch_explain(f.model, nullptr, inputs, Method::kRocerf, cfg), Error);
  }

  TEST_CASE("fixed features and box bounds are respected") {
    RocerfConfig cfg;
    cfg.domain.fixed = {1};
    const CfeResult r = scfe(linear({1.0, 1.0}), Eigen::Vector2d(-2.0, -2.0), cfg);
    CHECK(r.feasible);
    CHECK(r.x_cf(1) == -2.0);
    CHECK(r.cost_l2 == doctest::Approx(4.0).epsilon(1e-3));

    RocerfConfig box;
    box.domain.upper = Eigen::Vector2d(0.5, 10.0);
    const CfeResult b = scfe(linear({1.0, 1.0}), Eigen::Vector2d(-2.0, -2.0), box);
    CHECK(b.feasible);
    CHECK(b.x_cf(0) <= 0.5);

    RocerfConfig stuck;
    stuck.domain.fixed = {0};
    stuck.doubling_cap = 20;
    const CfeResult s = scfe(linear({1.0, 0.0}), Eigen::Vector2d(-2.0, 0.0), stuck);
    CHECK_FALSE(s.feasible);
    CHECK(s.error == std::optional<ErrorKind>(ErrorKind::kInfeasible));
  }

  TEST_CASE("configuration checks") {
    RocerfConfig cfg;
    cfg.lambda_init = 0.0;
    CHECK_THROWS_AS(scfe(linear({1.0}), Eigen::VectorXd::Constant(1, -1.0), cfg), Error);
    const Fitted f = fit(9);
    RocerfConfig big;
    big.k = f.train.n() + 1;
    const std::size_t i = negative_indices(f.model, f.test).front();
    try {
      rocerf::rocerf(f.model, f.cache, f.test.row(i), big);
      FAIL("expected KTooLarge");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kKTooLarge);
    }
  }

  TEST_CASE("results CSV") {
    CfeResult r;
    r.x0 = Eigen::VectorXd::Zero(1);
    r.x_cf = r.x0;
    r.feasible = true;
    r.cost_l2 = 0.25;
    r.cost_l1 = 0.5;
    r.iterations = 7;
    const std::vector<std::size_t> ids{42};
    const std::string csv = cfe_results_csv({r}, "rocerf", ids);
    CHECK(csv == "sample_id,method,feasible,cost_l2,cost_l1,constraint_value,iterations\n42,rocerf,true,0.25,0.5,0,7\n");
  }
}
