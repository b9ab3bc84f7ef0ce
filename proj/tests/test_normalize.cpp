#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>

#include "ctrlbench/normalize.hpp"

using namespace ctrlbench;

TEST_CASE("running stats: {1,2,3} gives mean 2 and sample variance 1") {
  RunningStats st(1);
  for (double v : {1.0, 2.0, 3.0}) st.update(v);
  REQUIRE(st.mean(0) == Catch::Approx(2.0).epsilon(1e-15));
  REQUIRE(st.variance()(0) == Catch::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("running stats: single observation has zero variance, guarded std") {
  RunningStats st(2);
  Vec x(2);
  x << 4.0, -1.0;
  st.update(x);
  REQUIRE(st.variance().isZero(0.0));
  // normalization treats the undefined std as 1
  Vec probe(2);
  probe << 5.0, -1.0;
  Vec z = normalize_state(st, probe);
  REQUIRE(z(0) == Catch::Approx(1.0));
  REQUIRE(z(1) == 0.0);
}

TEST_CASE("running stats: order of a multiset does not change the result") {
  std::vector<double> values;
  Rng rng(5);
  for (int i = 0; i < 200; ++i) values.push_back(gaussian(rng) * 3.0 + 1.0);
  RunningStats a(1), b(1);
  for (double v : values) a.update(v);
  std::shuffle(values.begin(), values.end(), rng);
  for (double v : values) b.update(v);
  REQUIRE(a.mean(0) == Catch::Approx(b.mean(0)).margin(1e-12));
  REQUIRE(a.m2(0) == Catch::Approx(b.m2(0)).margin(1e-9));
}

TEST_CASE("running stats: agrees with two-pass batch statistics") {
  Rng rng(6);
  const int n = 5000;
  std::vector<double> xs(n);
  RunningStats st(1);
  for (auto& v : xs) {
    v = 7.0 + 2.5 * gaussian(rng);
    st.update(v);
  }
  double mean = 0.0;
  for (double v : xs) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : xs) var += (v - mean) * (v - mean);
  var /= (n - 1);
  REQUIRE(std::abs(st.mean(0) - mean) / std::abs(mean) < 1e-10);
  REQUIRE(std::abs(st.variance()(0) - var) / var < 1e-10);
}

TEST_CASE("normalize_state: x = mean maps to zero") {
  RunningStats st(1);
  for (double v : {1.0, 2.0, 3.0}) st.update(v);
  REQUIRE(normalize_state(st, Vec::Constant(1, 2.0))(0) == 0.0);
}

TEST_CASE("normalize_state: mean 2, std 1, x = 3 maps to 1") {
  RunningStats st(1);
  for (double v : {1.0, 2.0, 3.0}) st.update(v);
  REQUIRE(normalize_state(st, Vec::Constant(1, 3.0))(0) ==
          Catch::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("normalize_state: far tails clip to +-10") {
  RunningStats st(1);
  for (double v : {1.0, 2.0, 3.0}) st.update(v);
  REQUIRE(normalize_state(st, Vec::Constant(1, 1e9))(0) == 10.0);
  REQUIRE(normalize_state(st, Vec::Constant(1, -1e9))(0) == -10.0);
}

TEST_CASE("normalize_state: normalized data approaches mean 0, variance 1") {
  Rng rng(9);
  RunningStats st(1);
  std::vector<double> data;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    double v = 3.0 + 2.0 * gaussian(rng);
    data.push_back(v);
    st.update(v);
  }
  double m = 0.0, s2 = 0.0;
  for (double v : data) m += normalize_state(st, Vec::Constant(1, v))(0);
  m /= n;
  for (double v : data) {
    double z = normalize_state(st, Vec::Constant(1, v))(0);
    s2 += (z - m) * (z - m);
  }
  s2 /= (n - 1);
  REQUIRE(std::abs(m) < 0.05);
  REQUIRE(std::abs(s2 - 1.0) < 0.05);
}

TEST_CASE("normalize_reward: zero stays zero regardless of stats") {
  RunningStats st(1);
  for (double v : {5.0, -3.0, 8.0}) st.update(v);
  REQUIRE(normalize_reward(st, 0.0) == 0.0);
}

TEST_CASE("normalize_reward: std 2 scales 4 down to 2") {
  RunningStats st(1);
  // {-2, 0, 2} has sample std 2
  for (double v : {-2.0, 0.0, 2.0}) st.update(v);
  REQUIRE(st.stddev()(0) == Catch::Approx(2.0).epsilon(1e-12));
  REQUIRE(normalize_reward(st, 4.0) == Catch::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("normalize_reward: sign is always preserved") {
  Rng rng(10);
  RunningStats st(1);
  for (int i = 0; i < 100; ++i) st.update(gaussian(rng) * 5.0);
  for (int i = 0; i < 100; ++i) {
    double r = gaussian(rng) * 10.0;
    double rn = normalize_reward(st, r);
    REQUIRE(((r > 0) == (rn > 0) || r == 0.0));
  }
}

TEST_CASE("centered_ranks: (10, 20, 30) maps to (-0.5, 0, 0.5)") {
  auto shaped = centered_ranks({10.0, 20.0, 30.0});
  REQUIRE(shaped[0] == -0.5);
  REQUIRE(shaped[1] == 0.0);
  REQUIRE(shaped[2] == 0.5);
}

TEST_CASE("centered_ranks: strictly increasing inputs sum to zero") {
  for (int n : {2, 5, 17, 50}) {
    std::vector<double> f;
    for (int i = 0; i < n; ++i) f.push_back(i * 1.7 - 3.0);
    auto shaped = centered_ranks(f);
    double sum = 0.0;
    for (double v : shaped) {
      sum += v;
      REQUIRE(v >= -0.5);
      REQUIRE(v <= 0.5);
    }
    REQUIRE(std::abs(sum) < 1e-12);
  }
}

TEST_CASE("centered_ranks: invariant under strictly monotone transforms") {
  Rng rng(11);
  std::vector<double> f;
  for (int i = 0; i < 30; ++i) f.push_back(gaussian(rng));
  std::vector<double> g;
  for (double v : f) g.push_back(std::exp(v) + 3.0 * v);
  REQUIRE(centered_ranks(f) == centered_ranks(g));
}

TEST_CASE("centered_ranks: exact ties share their midrank") {
  auto shaped = centered_ranks({5.0, 5.0});
  REQUIRE(shaped[0] == 0.0);
  REQUIRE(shaped[1] == 0.0);
  auto shaped3 = centered_ranks({1.0, 1.0, 9.0});
  REQUIRE(shaped3[0] == Catch::Approx(-0.25));
  REQUIRE(shaped3[1] == Catch::Approx(-0.25));
  REQUIRE(shaped3[2] == 0.5);
}

TEST_CASE("centered_ranks: fewer than two values is an error") {
  REQUIRE_THROWS_AS(centered_ranks({1.0}), std::invalid_argument);
  REQUIRE_THROWS_AS(centered_ranks({}), std::invalid_argument);
}
