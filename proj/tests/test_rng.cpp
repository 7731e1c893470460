#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "rocerf/parallel.hpp"
#include "rocerf/rng.hpp"

using rocerf::Rng;

TEST_SUITE("rng") {
  TEST_CASE("same seed gives the same stream") {
    Rng a(42), b(42), c(43);
    bool differs = false;
    for (int i = 0; i < 100; ++i) {
      const auto x = a.next_u64();
      CHECK(x == b.next_u64());
      differs = differs || x != c.next_u64();
    }
    CHECK(differs);
  }

  TEST_CASE("mt19937_64 reference output") {
    // The standard pins the 10000th output of a default-seeded engine.
    std::mt19937_64 engine;
    engine.discard(9999);
    CHECK(engine() == 9981545732273789042ULL);
  }

  TEST_CASE("uniform stays in [0, 1) and has mean near one half") {
    Rng rng(7);
    double sum = 0.0;
    for (int i = 0; i < 20000; ++i) {
      const double u = rng.uniform();
      REQUIRE(u >= 0.0);
      REQUIRE(u < 1.0);
      sum += u;
    }
    CHECK(sum / 20000.0 == doctest::Approx(0.5).epsilon(0.02));
  }

  TEST_CASE("normal moments") {
    Rng rng(3);
    double s1 = 0.0, s2 = 0.0;
    const int n = 50000;
    for (int i = 0; i < n; ++i) {
      const double z = rng.normal();
      s1 += z;
      s2 += z * z;
    }
    CHECK(std::abs(s1 / n) < 0.02);
    CHECK(s2 / n == doctest::Approx(1.0).epsilon(0.03));
  }

  TEST_CASE("uniform_index covers the range") {
    Rng rng(5);
    std::vector<int> hits(7, 0);
    for (int i = 0; i < 7000; ++i) ++hits[rng.uniform_index(7)];
    for (int h : hits) CHECK(h > 800);
  }

  TEST_CASE("sample_without_replacement is sorted and distinct") {
    Rng rng(11);
    for (int t = 0; t < 50; ++t) {
      const auto s = rng.sample_without_replacement(30, 8);
      REQUIRE(s.size() == 8);
      CHECK(std::is_sorted(s.begin(), s.end()));
      CHECK(std::set<std::size_t>(s.begin(), s.end()).size() == 8);
      CHECK(s.back() < 30);
    }
    CHECK(rng.sample_without_replacement(5, 5) == std::vector<std::size_t>{0, 1, 2, 3, 4});
    CHECK(rng.sample_without_replacement(5, 0).empty());
  }

  TEST_CASE("shuffle is a permutation") {
    Rng rng(9);
    std::vector<int> v{1, 2, 3, 4, 5, 6, 7, 8};
    auto w = v;
    rng.shuffle(w);
    std::sort(w.begin(), w.end());
    CHECK(v == w);
  }

  TEST_CASE("derived seeds differ per stream and are stable") {
    std::set<std::uint64_t> seen;
    for (std::uint64_t s = 0; s < 100; ++s) seen.insert(rocerf::derive_seed(1, s));
    CHECK(seen.size() == 100);
    CHECK(rocerf::derive_seed(1, 2) == rocerf::derive_seed(1, 2));
    CHECK(rocerf::derive_seed(1, 2) != rocerf::derive_seed(2, 2));
  }

  TEST_CASE("parallel_for visits every index once and rethrows the lowest failure") {
    std::vector<int> hits(1000, 0);
    rocerf::parallel_for(1000, [&](std::size_t i) { hits[i] += 1; }, 4);
    CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
    try {
      rocerf::parallel_for(
          100,
          [](std::size_t i) {
            if (i == 17 || i == 60) throw std::runtime_error(std::to_string(i));
          },
          4);
      FAIL("expected an exception");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()) == "17");
    }
  }
}
