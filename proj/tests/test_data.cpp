#include <doctest.h>

#include <cmath>
#include <set>

#include "rocerf/data.hpp"
#include "rocerf/error.hpp"
#include "support.hpp"

using namespace rocerf;

namespace {

Schema yes_no_schema() {
  return parse_schema(
      "# toy\n"
      "column.age = numeric\n"
      "column.city = categorical\n"
      "column.approved = label\n"
      "positive_label = yes\n",
      "toy.schema");
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

TEST_SUITE("data") {
  TEST_CASE("labels map through positive_label") {
    const RawDataset raw = parse_csv("age,city,approved\n30,a,yes\n40,b,no\n50,a,yes\n", yes_no_schema(), "toy");
    CHECK(raw.rows() == 3);
    CHECK(raw.labels == std::vector<int>{1, -1, 1});
    CHECK(raw.numeric(2, 0) == 50.0);
    CHECK(raw.categorical[1][0] == "b");
  }

  TEST_CASE("non-numeric cell names its row and column") {
    try {
      parse_csv("age,city,approved\n30,a,yes\nold,b,no\n", yes_no_schema(), "toy.csv");
      FAIL("expected SchemaMismatch");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kSchemaMismatch);
      const std::string msg = e.what();
      CHECK(msg.find("row 3") != std::string::npos);
      CHECK(msg.find("'age'") != std::string::npos);
    }
  }

  TEST_CASE("missing values drop the row and are counted") {
    const RawDataset raw =
        parse_csv("age,city,approved\n30,a,yes\n?,b,no\n40,NA,no\n50,b,no\n", yes_no_schema(), "toy");
    CHECK(raw.rows() == 2);
    CHECK(raw.dropped_rows == 2);
  }

  TEST_CASE("label and header errors") {
    CHECK(kind_of([] { parse_csv("age,city,approved\n1,a,yes\n2,a,yes\n", yes_no_schema(), "t"); }) ==
          ErrorKind::kDegenerateLabels);
    CHECK(kind_of([] { parse_csv("age,city,approved\n1,a,yes\n2,a,no\n3,a,maybe\n", yes_no_schema(), "t"); }) ==
          ErrorKind::kSchemaMismatch);
    CHECK(kind_of([] { parse_csv("age,approved\n1,yes\n2,no\n", yes_no_schema(), "t"); }) ==
          ErrorKind::kSchemaMismatch);
    CHECK(kind_of([] { load_csv("/nonexistent/file.csv", yes_no_schema()); }) == ErrorKind::kMissingFile);
    CHECK(kind_of([] { parse_schema("column.x = fancy\n", "s"); }) == ErrorKind::kSchemaMismatch);
    CHECK(kind_of([] { parse_schema("colour = numeric\n", "s"); }) == ErrorKind::kSchemaMismatch);
  }

  TEST_CASE("quoted fields") {
    const auto f = split_csv_line(R"(a,"b,c","say ""hi""", d )");
    REQUIRE(f.size() == 4);
    CHECK(f[1] == "b,c");
    CHECK(f[2] == "say \"hi\"");
    CHECK(f[3] == "d");
  }

  TEST_CASE("z-scoring a symmetric triple") {
    const Schema s = parse_schema("column.v = numeric\ncolumn.y = label\npositive_label = 1\n", "s");
    const RawDataset raw = parse_csv("v,y\n1,1\n2,0\n3,1\n", s, "t");
    const Preprocessed p = fit_apply_preprocess(raw, {}, false);
    CHECK(p.train.features(0, 0) == doctest::Approx(-1.224744871391589).epsilon(1e-9));
    CHECK(std::abs(p.train.features(1, 0)) < 1e-12);
    CHECK(p.train.features(2, 0) == doctest::Approx(1.224744871391589).epsilon(1e-9));
    CHECK(p.preprocessor.inverse_numeric(p.train.row(2))(0) == doctest::Approx(3.0));
  }

  TEST_CASE("constant column standardizes to zeros") {
    const Schema s = parse_schema("column.v = numeric\ncolumn.y = label\npositive_label = 1\n", "s");
    const RawDataset raw = parse_csv("v,y\n5,1\n5,0\n5,1\n", s, "t");
    const Preprocessed p = fit_apply_preprocess(raw, {}, false);
    for (int i = 0; i < 3; ++i) CHECK(p.train.features(i, 0) == 0.0);
  }

  TEST_CASE("one-hot encoding with an unseen category and a bias column") {
    const Schema s = yes_no_schema();
    const RawDataset train = parse_csv("age,city,approved\n30,a,yes\n40,b,no\n", s, "train");
    const RawDataset test = parse_csv("age,city,approved\n35,c,yes\n35,a,no\n", s, "test");
    const std::array<RawDataset, 1> others{test};
    const Preprocessed p = fit_apply_preprocess(train, others, true);
    CHECK(p.train.d() == 4);  // age, city=a, city=b, _bias
    CHECK(p.train.bias_column == std::optional<std::size_t>(3));
    const Dataset& t = p.others[0];
    CHECK(t.features(0, 1) == 0.0);
    CHECK(t.features(0, 2) == 0.0);
    CHECK(t.features(1, 1) == 1.0);
    CHECK(t.features(0, 3) == 1.0);
    CHECK(p.preprocessor.feature_names()[1] == "city=a");
  }

  TEST_CASE("split sizes, disjointness and determinism") {
    const Dataset d = make_synthetic_gaussians(50, 2, 2.0, 1);
    const SplitIndices a = split_indices(d.labels, {0.7, 0.1, 0.2, 9});
    const SplitIndices b = split_indices(d.labels, {0.7, 0.1, 0.2, 9});
    CHECK(a.train.size() == 70);
    CHECK(a.val.size() == 10);
    CHECK(a.test.size() == 20);
    CHECK(a.train == b.train);
    std::set<std::size_t> all(a.train.begin(), a.train.end());
    all.insert(a.val.begin(), a.val.end());
    all.insert(a.test.begin(), a.test.end());
    CHECK(all.size() == 100);
    CHECK(split_indices(d.labels, {0.7, 0.1, 0.2, 10}).train != a.train);
  }

  TEST_CASE("degenerate split") {
    const Dataset d = make_synthetic_gaussians(2, 1, 1.0, 0);
    CHECK(kind_of([&] { split(d, {0.7, 0.1, 0.2, 0}); }) == ErrorKind::kDegenerateSplit);
  }

  TEST_CASE("synthetic gaussians alternate labels and shift the first axis") {
    const Dataset d = make_synthetic_gaussians(500, 3, 4.0, 2);
    CHECK(d.n() == 1000);
    CHECK(d.labels[0] == 1);
    CHECK(d.labels[1] == -1);
    double pos = 0.0, neg = 0.0;
    for (std::size_t i = 0; i < d.n(); ++i) (d.labels[i] > 0 ? pos : neg) += d.features(static_cast<Eigen::Index>(i), 0);
    CHECK(pos / 500 == doctest::Approx(2.0).epsilon(0.1));
    CHECK(neg / 500 == doctest::Approx(-2.0).epsilon(0.1));
  }

  TEST_CASE("standardized CSV round trip keeps the bias column") {
    const Dataset d = with_bias_column(make_synthetic_gaussians(5, 2, 1.0, 3));
    const auto path = testing::temp_dir("data_rt") / "d.csv";
    write_dataset_csv(path, d);
    const Dataset back = read_dataset_csv(path);
    CHECK(back.features == d.features);
    CHECK(back.labels == d.labels);
    CHECK(back.bias_column == d.bias_column);
  }

  TEST_CASE("without and subset") {
    const Dataset d = make_synthetic_gaussians(3, 1, 1.0, 4);
    const std::vector<std::size_t> removed{1, 4};
    const Dataset w = d.without(removed);
    CHECK(w.n() == 4);
    CHECK(w.features(1, 0) == d.features(2, 0));
    const std::vector<std::size_t> pick{5, 0};
    CHECK(d.subset(pick).labels == std::vector<int>{-1, 1});
  }

  TEST_CASE("German Credit file has 1000 rows") {
    const auto dir = testing::data_dir();
    if (!std::filesystem::exists(dir / "german_credit.csv")) {
      MESSAGE("German Credit data not present; skipped");
      return;
    }
    const RawDataset raw = load_csv(dir / "german_credit.csv", load_schema(dir / "german_credit.schema"));
    CHECK(raw.rows() == 1000);
    CHECK(raw.dropped_rows == 0);
    const Preprocessed p = fit_apply_preprocess(raw, {}, true);
    CHECK(p.train.d() == 60);
  }
}
