#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "ctrlbench/net.hpp"
#include "oracles.hpp"

using namespace ctrlbench;

namespace {

MlpParams random_mlp(const MlpSpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  return init_mlp(spec, rng);
}

Vec random_vec(int n, Rng& rng, double scale = 1.0) {
  Vec v(n);
  for (int i = 0; i < n; ++i) v(i) = scale * gaussian(rng);
  return v;
}

}  // namespace

TEST_CASE("forward: all-zero parameters give zero output") {
  MlpParams p = zero_mlp({3, 16, 2});
  Rng rng(1);
  for (int trial = 0; trial < 5; ++trial) {
    Vec x = random_vec(3, rng);
    REQUIRE(forward(p, x).isZero(0.0));
  }
}

TEST_CASE("forward: 1-1-1 net with unit weights is tanh(tanh(x))") {
  MlpParams p = zero_mlp({1, 1, 1});
  p.w1(0, 0) = 1.0;
  p.w2(0, 0) = 1.0;
  p.w3(0, 0) = 1.0;
  for (double x : {-2.0, -0.3, 0.0, 0.7, 1.9}) {
    Vec in = Vec::Constant(1, x);
    REQUIRE(forward(p, in)(0) == Catch::Approx(std::tanh(std::tanh(x))).epsilon(1e-15));
  }
}

TEST_CASE("forward: output is linear in the readout layer") {
  MlpParams p = random_mlp({4, 8, 3}, 7);
  Rng rng(8);
  Vec x = random_vec(4, rng);
  Vec base = forward(p, x);
  MlpParams scaled = p;
  scaled.w3 *= 2.5;
  scaled.b3 *= 2.5;
  REQUIRE((forward(scaled, x) - 2.5 * base).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("forward: input size mismatch throws") {
  MlpParams p = zero_mlp({3, 4, 1});
  REQUIRE_THROWS_AS(forward(p, Vec::Zero(2)), std::invalid_argument);
}

TEST_CASE("backward: zero upstream gives zero gradient") {
  MlpParams p = random_mlp({3, 5, 2}, 3);
  Rng rng(4);
  Vec x = random_vec(3, rng);
  auto cache = forward_cached(p, x);
  auto res = backward(p, cache, Vec::Zero(2));
  REQUIRE(res.param_grad.isZero(0.0));
  REQUIRE(res.input_grad.isZero(0.0));
}

TEST_CASE("backward: matches central finite differences on random nets") {
  Rng rng(42);
  for (int trial = 0; trial < 100; ++trial) {
    MlpSpec spec{1 + static_cast<int>(rng() % 4), 3 + static_cast<int>(rng() % 4),
                 1 + static_cast<int>(rng() % 3)};
    MlpParams p = random_mlp(spec, rng());
    Vec x = random_vec(spec.in_dim, rng);
    Vec upstream = random_vec(spec.out_dim, rng);
    auto analytic = backward(p, forward_cached(p, x), upstream);
    auto fd = oracles::finite_difference(
        [&](const FlatParams& theta) {
          return upstream.dot(forward(unflatten(spec, theta), x));
        },
        flatten(p));
    REQUIRE(oracles::gradient_error(analytic.param_grad, fd) < 1e-5);
    auto fd_input = oracles::finite_difference(
        [&](const FlatParams& xs) { return upstream.dot(forward(p, xs)); }, x);
    REQUIRE(oracles::gradient_error(analytic.input_grad, fd_input) < 1e-5);
  }
}

TEST_CASE("backward: linear in the upstream signal") {
  MlpParams p = random_mlp({3, 6, 2}, 11);
  Rng rng(12);
  Vec x = random_vec(3, rng);
  Vec u1 = random_vec(2, rng);
  Vec u2 = random_vec(2, rng);
  auto cache = forward_cached(p, x);
  FlatParams sum = backward(p, cache, Vec(u1 + u2)).param_grad;
  FlatParams parts =
      backward(p, cache, u1).param_grad + backward(p, cache, u2).param_grad;
  REQUIRE((sum - parts).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  AdamState st(4, 0.01);
  FlatParams p = Vec::Constant(4, 1.5);
  FlatParams before = p;
  adam_step(st, p, Vec::Zero(4));
  REQUIRE(p == before);
}

TEST_CASE("adam: first step moves by about alpha in the sign direction") {
  double alpha = 0.05;
  AdamState st(3, alpha);
  FlatParams p = Vec::Zero(3);
  FlatParams g(3);
  g << 0.7, -1.3, 2.0;
  adam_step(st, p, g);
  for (int i = 0; i < 3; ++i) {
    REQUIRE(std::abs(p(i) + alpha * (g(i) > 0 ? 1.0 : -1.0)) < alpha * 1e-6);
  }
}

TEST_CASE("adam: 200 steps on theta^2 reach |theta| < 1e-2") {
  AdamState st(1, 0.1);
  FlatParams theta = Vec::Constant(1, 2.0);
  for (int i = 0; i < 200; ++i) {
    FlatParams grad = 2.0 * theta;
    adam_step(st, theta, grad);
  }
  REQUIRE(std::abs(theta(0)) < 1e-2);
}

TEST_CASE("adam: non-finite gradient throws and leaves parameters unchanged") {
  AdamState st(2, 0.01);
  FlatParams p = Vec::Constant(2, 3.0);
  FlatParams g(2);
  g << 1.0, std::numeric_limits<double>::quiet_NaN();
  REQUIRE_THROWS_AS(adam_step(st, p, g), std::runtime_error);
  REQUIRE(p(0) == 3.0);
  REQUIRE(p(1) == 3.0);
  REQUIRE(st.t == 0);
}

TEST_CASE("gaussian log-prob: value at the mean, d = 1") {
  Vec a = Vec::Constant(1, 0.4);
  REQUIRE(gaussian_log_prob(a, a) ==
          Catch::Approx(-0.5 * std::log(2.0 * std::numbers::pi)).epsilon(1e-12));
}

TEST_CASE("gaussian log-prob: unit distance at d = 2") {
  Vec mean(2);
  mean << 0.3, -0.2;
  Vec a = mean;
  a(0) += 1.0;
  REQUIRE(gaussian_log_prob(a, mean) ==
          Catch::Approx(-0.5 - std::log(2.0 * std::numbers::pi)).epsilon(1e-12));
}

TEST_CASE("gaussian log-prob: gradient w.r.t. mean vanishes at the mean") {
  Vec mean(3);
  mean << 1.0, 2.0, -1.0;
  REQUIRE(gaussian_log_prob_grad_mean(mean, mean).isZero(0.0));
}

TEST_CASE("gaussian log-prob: density integrates to one (Monte Carlo, d=1)") {
  // box estimate of the integral over [-6, 6] around the mean
  Rng rng(99);
  Vec mean = Vec::Zero(1);
  double sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    Vec a = Vec::Constant(1, uniform(rng, -6.0, 6.0));
    sum += std::exp(gaussian_log_prob(a, mean));
  }
  double integral = 12.0 * sum / n;
  REQUIRE(integral == Catch::Approx(1.0).margin(0.02));
}

TEST_CASE("actions: deterministic action is exactly the network mean") {
  GaussianPolicy pi{random_mlp({3, 16, 1}, 21)};
  Rng rng(22);
  Vec s = random_vec(3, rng);
  REQUIRE(deterministic_action(pi, s) == forward(pi.mean_net, s));
}

TEST_CASE("actions: sample variance is the identity covariance") {
  GaussianPolicy pi{random_mlp({2, 8, 2}, 31)};
  Rng srng(32);
  Vec s = random_vec(2, srng);
  Vec mean = forward(pi.mean_net, s);
  Rng rng(33);
  const int n = 100000;
  Vec sum = Vec::Zero(2), sumsq = Vec::Zero(2);
  for (int i = 0; i < n; ++i) {
    Vec a = sample_action(pi, s, rng);
    Vec d = a - mean;
    sum += d;
    sumsq += d.cwiseProduct(d);
  }
  for (int k = 0; k < 2; ++k) {
    double var = (sumsq(k) - sum(k) * sum(k) / n) / (n - 1);
    REQUIRE(var > 0.97);
    REQUIRE(var < 1.03);
  }
}

TEST_CASE("actions: fixed rng seed reproduces the sample") {
  GaussianPolicy pi{random_mlp({2, 4, 1}, 41)};
  Vec s = Vec::Zero(2);
  Rng r1(7), r2(7);
  REQUIRE(sample_action(pi, s, r1) == sample_action(pi, s, r2));
}

TEST_CASE("flatten/unflatten: exact round trip") {
  Rng rng(51);
  for (int trial = 0; trial < 20; ++trial) {
    MlpSpec spec{1 + static_cast<int>(rng() % 5), 2 + static_cast<int>(rng() % 7),
                 1 + static_cast<int>(rng() % 4)};
    MlpParams p = random_mlp(spec, rng());
    MlpParams q = unflatten(spec, flatten(p));
    REQUIRE(p.w1 == q.w1);
    REQUIRE(p.b1 == q.b1);
    REQUIRE(p.w2 == q.w2);
    REQUIRE(p.b2 == q.b2);
    REQUIRE(p.w3 == q.w3);
    REQUIRE(p.b3 == q.b3);
  }
}

TEST_CASE("flatten: layout sizes for the two benchmark widths") {
  // 3*16 + 16 + 16*16 + 16 + 16*1 + 1
  REQUIRE(MlpSpec{3, 16, 1}.flat_size() == 353);
  // same layout arithmetic at width 64: 3*64 + 64 + 64*64 + 64 + 64*1 + 1
  REQUIRE(MlpSpec{3, 64, 1}.flat_size() == 4481);
  REQUIRE(static_cast<int>(flatten(zero_mlp({3, 16, 1})).size()) == 353);
  REQUIRE(static_cast<int>(flatten(zero_mlp({3, 64, 1})).size()) == 4481);
}

TEST_CASE("unflatten: length mismatch throws") {
  REQUIRE_THROWS_AS(unflatten({3, 16, 1}, Vec::Zero(10)), std::invalid_argument);
}
