#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "ctrlbench/rl.hpp"
#include "oracles.hpp"

using namespace ctrlbench;

namespace {

Vec random_vec(int n, Rng& rng, double scale = 1.0) {
  Vec v(n);
  for (int i = 0; i < n; ++i) v(i) = scale * gaussian(rng);
  return v;
}

}  // namespace

TEST_CASE("gae: lambda = 0 collapses to the one-step TD error") {
  Rng rng(1);
  const int T = 30;
  Vec rewards = random_vec(T, rng);
  Vec values = random_vec(T + 1, rng);
  std::vector<unsigned char> dones(T, 0);
  dones[12] = 1;
  auto batch = compute_gae(rewards, values, dones, 0.99, 0.0);
  REQUIRE((batch.advantages - batch.td_errors).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("gae: gamma = lambda = 1 with zero values sums rewards to go") {
  Vec rewards(3);
  rewards << 1.0, 1.0, 1.0;
  Vec values = Vec::Zero(4);
  std::vector<unsigned char> dones = {0, 0, 1};
  auto batch = compute_gae(rewards, values, dones, 1.0, 1.0);
  REQUIRE(batch.advantages(0) == 3.0);
  REQUIRE(batch.advantages(1) == 2.0);
  REQUIRE(batch.advantages(2) == 1.0);
  REQUIRE(batch.value_targets == batch.advantages);
}

TEST_CASE("gae: lambda = 1 with zero values is the discounted reward-to-go") {
  Rng rng(2);
  const int T = 40;
  Vec rewards = random_vec(T, rng);
  Vec values = Vec::Zero(T + 1);
  std::vector<unsigned char> dones(T, 0);
  auto batch = compute_gae(rewards, values, dones, 0.97, 1.0);
  for (int t = 0; t < T; ++t) {
    double expect = 0.0;
    double g = 1.0;
    for (int k = t; k < T; ++k) {
      expect += g * rewards(k);
      g *= 0.97;
    }
    REQUIRE(batch.advantages(t) == Catch::Approx(expect).margin(1e-12));
  }
}

TEST_CASE("gae: matches the brute-force double sum on random trajectories") {
  Rng rng(3);
  for (int trial = 0; trial < 1000; ++trial) {
    const int T = 50;
    Vec rewards = random_vec(T, rng);
    Vec values = random_vec(T + 1, rng);
    std::vector<unsigned char> dones(T, 0);
    for (int t = 0; t < T; ++t) dones[t] = (rng() % 10 == 0) ? 1 : 0;
    if (dones[T - 1]) values(T) = 0.0;
    double gamma = uniform(rng, 0.8, 1.0);
    double lambda = uniform(rng, 0.0, 1.0);
    auto batch = compute_gae(rewards, values, dones, gamma, lambda);
    Vec brute = oracles::brute_force_gae(rewards, values, dones, gamma, lambda);
    REQUIRE((batch.advantages - brute).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("gae: length mismatch throws") {
  Vec r = Vec::Zero(5);
  std::vector<unsigned char> dones(5, 0);
  REQUIRE_THROWS_AS(compute_gae(r, Vec::Zero(5), dones, 0.99, 0.95),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(compute_gae(r, Vec::Zero(6), {0, 0}, 0.99, 0.95),
                    std::invalid_argument);
}

TEST_CASE("clipped surrogate: unit ratio keeps the advantage objective") {
  Vec logp(3);
  logp << -1.0, -2.0, -0.5;
  Vec adv(3);
  adv << 1.0, -2.0, 0.5;
  auto res = clipped_surrogate(logp, logp, adv, 0.2);
  REQUIRE(res.loss == Catch::Approx(-adv.mean()).epsilon(1e-12));
  for (int i = 0; i < 3; ++i)
    REQUIRE(res.dloss_dlogp(i) == Catch::Approx(-adv(i) / 3.0).epsilon(1e-12));
}

TEST_CASE("clipped surrogate: favorable ratio above 1+eps is flat") {
  // r = 1.5, A = 1: min(1.5, 1.2) = 1.2, clipped branch binds
  Vec logp_new = Vec::Constant(1, std::log(1.5));
  Vec logp_old = Vec::Zero(1);
  Vec adv = Vec::Constant(1, 1.0);
  auto res = clipped_surrogate(logp_new, logp_old, adv, 0.2);
  REQUIRE(res.loss == Catch::Approx(-1.2).epsilon(1e-12));
  REQUIRE(res.dloss_dlogp(0) == 0.0);
}

TEST_CASE("clipped surrogate: favorable ratio below 1-eps is flat") {
  // r = 0.5, A = -1: min(-0.5, -0.8) = -0.8, clipped branch binds
  Vec logp_new = Vec::Constant(1, std::log(0.5));
  Vec logp_old = Vec::Zero(1);
  Vec adv = Vec::Constant(1, -1.0);
  auto res = clipped_surrogate(logp_new, logp_old, adv, 0.2);
  REQUIRE(res.loss == Catch::Approx(0.8).epsilon(1e-12));
  REQUIRE(res.dloss_dlogp(0) == 0.0);
}

TEST_CASE("clipped surrogate: gradient is zero exactly on binding clips") {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 16;
    Vec logp_new = random_vec(n, rng, 0.5);
    Vec logp_old = random_vec(n, rng, 0.5);
    Vec adv = random_vec(n, rng, 2.0);
    double eps = uniform(rng, 0.05, 0.5);
    auto res = clipped_surrogate(logp_new, logp_old, adv, eps);
    for (int i = 0; i < n; ++i) {
      double r = std::exp(logp_new(i) - logp_old(i));
      double unclipped = r * adv(i);
      double clipped = clip(r, 1.0 - eps, 1.0 + eps) * adv(i);
      if (clipped < unclipped) {
        REQUIRE(res.dloss_dlogp(i) == 0.0);
      } else if (adv(i) != 0.0) {
        REQUIRE(res.dloss_dlogp(i) != 0.0);
      }
    }
  }
}

TEST_CASE("clipped surrogate: matches finite differences through log-prob") {
  // full path: policy params -> log-prob -> surrogate loss
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    MlpSpec spec{2, 4, 2};
    Rng prng(rng());
    MlpParams policy = init_mlp(spec, prng);
    const int n = 6;
    std::vector<Vec> states, actions;
    Vec logp_old(n), adv(n);
    for (int i = 0; i < n; ++i) {
      states.push_back(random_vec(2, rng));
      actions.push_back(random_vec(2, rng));
      logp_old(i) = gaussian_log_prob(actions[i], forward(policy, states[i])) +
                    0.2 * gaussian(rng);  // exercise both branches
      adv(i) = gaussian(rng);
    }
    auto loss_at = [&](const FlatParams& theta) {
      MlpParams p = unflatten(spec, theta);
      Vec logp_new(n);
      for (int i = 0; i < n; ++i)
        logp_new(i) = gaussian_log_prob(actions[i], forward(p, states[i]));
      return clipped_surrogate(logp_new, logp_old, adv, 0.2).loss;
    };
    Vec logp_new(n);
    for (int i = 0; i < n; ++i)
      logp_new(i) = gaussian_log_prob(actions[i], forward(policy, states[i]));
    auto sur = clipped_surrogate(logp_new, logp_old, adv, 0.2);
    FlatParams grad = FlatParams::Zero(spec.flat_size());
    for (int i = 0; i < n; ++i) {
      ForwardCache c = forward_cached(policy, states[i]);
      Vec upstream =
          sur.dloss_dlogp(i) * gaussian_log_prob_grad_mean(actions[i], c.y);
      grad += backward(policy, c, upstream).param_grad;
    }
    FlatParams fd = oracles::finite_difference(loss_at, flatten(policy));
    REQUIRE(oracles::gradient_error(grad, fd) < 1e-5);
  }
}

TEST_CASE("critic target: terminal transitions bootstrap nothing") {
  REQUIRE(critic_td_target(3.0, 100.0, true, 0.99) == 3.0);
}

TEST_CASE("critic target: hand-computed bootstrap") {
  REQUIRE(critic_td_target(1.0, 10.0, false, 0.99) ==
          Catch::Approx(10.9).epsilon(1e-12));
}

TEST_CASE("critic: semi-gradient matches finite differences") {
  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    MlpSpec spec{3, 4, 1};
    Rng prng(rng());
    MlpParams value = init_mlp(spec, prng);
    Vec s = random_vec(3, rng);
    double target = gaussian(rng);  // constant in differentiation
    auto loss_at = [&](const FlatParams& theta) {
      double v = forward(unflatten(spec, theta), s)(0);
      return 0.5 * (target - v) * (target - v);
    };
    ForwardCache c = forward_cached(value, s);
    FlatParams grad =
        (c.y(0) - target) * backward(value, c, Vec::Ones(1)).param_grad;
    FlatParams fd = oracles::finite_difference(loss_at, flatten(value));
    REQUIRE(oracles::gradient_error(grad, fd) < 1e-5);
    if (std::abs(c.y(0) - target) < 1e-300) REQUIRE(grad.isZero(0.0));
  }
}

TEST_CASE("a3c gradient: zero TD error gives zero gradient") {
  Rng rng(7);
  MlpParams policy = init_mlp({3, 4, 2}, rng);
  Vec s = random_vec(3, rng);
  Vec a = random_vec(2, rng);
  REQUIRE(a3c_actor_gradient(policy, s, a, 0.0).isZero(0.0));
}

TEST_CASE("a3c gradient: action at the mean gives zero gradient") {
  Rng rng(8);
  MlpParams policy = init_mlp({3, 4, 2}, rng);
  Vec s = random_vec(3, rng);
  Vec a = forward(policy, s);
  REQUIRE(a3c_actor_gradient(policy, s, a, 1.7).isZero(0.0));
}

TEST_CASE("a3c gradient: matches finite differences of logpi * delta") {
  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    MlpSpec spec{2, 5, 2};
    Rng prng(rng());
    MlpParams policy = init_mlp(spec, prng);
    Vec s = random_vec(2, rng);
    Vec a = random_vec(2, rng);
    double delta = gaussian(rng);
    auto f = [&](const FlatParams& theta) {
      MlpParams p = unflatten(spec, theta);
      return gaussian_log_prob(a, forward(p, s)) * delta;
    };
    FlatParams grad = a3c_actor_gradient(policy, s, a, delta);
    FlatParams fd = oracles::finite_difference(f, flatten(policy));
    REQUIRE(oracles::gradient_error(grad, fd) < 1e-5);
  }
}

TEST_CASE("ddpg gradient: critic constant in the action gives zero") {
  Rng rng(10);
  MlpParams actor = init_mlp({3, 4, 1}, rng);
  MlpParams critic = init_mlp({4, 4, 1}, rng);
  critic.w1.col(3).setZero();  // action column contributes nothing
  Vec s = random_vec(3, rng);
  REQUIRE(ddpg_actor_gradient(actor, critic, s).isZero(0.0));
}

TEST_CASE("ddpg gradient: unit dq/da reduces to the actor jacobian") {
  // the composition step with dq/da = 1 is exactly grad_theta mu(s)
  Rng rng(11);
  MlpParams actor = init_mlp({3, 4, 1}, rng);
  Vec s = random_vec(3, rng);
  FlatParams composed = actor_gradient_from_dq_da(actor, s, Vec::Ones(1));
  FlatParams jac =
      backward(actor, forward_cached(actor, s), Vec::Ones(1)).param_grad;
  REQUIRE(composed == jac);
}

TEST_CASE("ddpg gradient: matches finite differences of q(s, mu(s))") {
  Rng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    MlpSpec aspec{2, 4, 2};
    MlpSpec cspec{4, 5, 1};
    Rng arng(rng()), crng(rng());
    MlpParams actor = init_mlp(aspec, arng);
    MlpParams critic = init_mlp(cspec, crng);
    Vec s = random_vec(2, rng);
    auto f = [&](const FlatParams& theta) {
      MlpParams a = unflatten(aspec, theta);
      Vec mu = forward(a, s);
      Vec z(4);
      z << s, mu;
      return forward(critic, z)(0);
    };
    FlatParams grad = ddpg_actor_gradient(actor, critic, s);
    FlatParams fd = oracles::finite_difference(f, flatten(actor));
    REQUIRE(oracles::gradient_error(grad, fd) < 1e-5);
  }
}

TEST_CASE("ou noise: deterministic decay without diffusion") {
  OuState st(1, 0.15, 0.0);
  st.x(0) = 1.0;
  Rng rng(13);
  Vec x = ou_step(st, rng);
  REQUIRE(x(0) == Catch::Approx(0.85).epsilon(1e-12));
  for (int i = 0; i < 100; ++i) x = ou_step(st, rng);
  REQUIRE(std::abs(x(0)) < 1e-6);
}

TEST_CASE("ou noise: empirical stationary std matches the AR(1) value") {
  OuState st(1, 0.15, 0.2);
  Rng rng(14);
  double sumsq = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    Vec x = ou_step(st, rng);
    sumsq += x(0) * x(0);
  }
  double expect = 0.2 / std::sqrt(2.0 * 0.15 - 0.15 * 0.15);
  double got = std::sqrt(sumsq / n);
  REQUIRE(got > 0.9 * expect);
  REQUIRE(got < 1.1 * expect);
}

namespace {

Transition make_transition(double tag) {
  Transition t;
  t.s = Vec::Constant(1, tag);
  t.a = Vec::Constant(1, tag);
  t.r = tag;
  t.s_next = Vec::Constant(1, tag);
  t.done = false;
  return t;
}

}  // namespace

TEST_CASE("replay: ring semantics evict the oldest entry") {
  ReplayBuffer buf(2);
  buf.push(make_transition(1));
  buf.push(make_transition(2));
  buf.push(make_transition(3));
  REQUIRE(buf.size() == 2);
  std::vector<double> tags = {buf.at(0).r, buf.at(1).r};
  std::sort(tags.begin(), tags.end());
  REQUIRE(tags == std::vector<double>{2.0, 3.0});
}

TEST_CASE("replay: singleton buffer sample returns that transition") {
  ReplayBuffer buf(10);
  buf.push(make_transition(7));
  Rng rng(15);
  auto batch = buf.sample(1, rng);
  REQUIRE(batch.size() == 1);
  REQUIRE(batch[0].r == 7.0);
}

TEST_CASE("replay: sampling is uniform (Monte Carlo)") {
  ReplayBuffer buf(10);
  for (int i = 0; i < 10; ++i) buf.push(make_transition(i));
  Rng rng(16);
  std::vector<int> counts(10, 0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    auto batch = buf.sample(1, rng);
    counts[static_cast<int>(batch[0].r)] += 1;
  }
  for (int c : counts) {
    REQUIRE(c > n / 10 - n / 100);
    REQUIRE(c < n / 10 + n / 100);
  }
}

TEST_CASE("replay: under-filled sampling is an error") {
  ReplayBuffer buf(100);
  buf.push(make_transition(1));
  Rng rng(17);
  REQUIRE_THROWS_AS(buf.sample(2, rng), std::runtime_error);
}

TEST_CASE("replay: size is monotone up to capacity, then constant") {
  ReplayBuffer buf(5);
  std::size_t prev = 0;
  for (int i = 0; i < 20; ++i) {
    buf.push(make_transition(i));
    REQUIRE(buf.size() >= prev);
    REQUIRE(buf.size() <= 5);
    prev = buf.size();
  }
  REQUIRE(buf.size() == 5);
}

TEST_CASE("target update: tau = 1 copies, tau = 0 freezes") {
  Rng rng(18);
  MlpParams live_a = init_mlp({2, 3, 1}, rng);
  MlpParams live_c = init_mlp({3, 3, 1}, rng);
  TargetNets t{zero_mlp({2, 3, 1}), zero_mlp({3, 3, 1}), 0.5};
  target_soft_update(t, live_a, live_c, 1.0);
  REQUIRE(flatten(t.actor_target) == flatten(live_a));
  REQUIRE(flatten(t.critic_target) == flatten(live_c));
  FlatParams before = flatten(t.actor_target);
  target_soft_update(t, zero_mlp({2, 3, 1}), zero_mlp({3, 3, 1}), 0.0);
  REQUIRE(flatten(t.actor_target) == before);
}

TEST_CASE("target update: geometric approach to the live parameters") {
  MlpParams live = zero_mlp({1, 1, 1});
  live.w1(0, 0) = 1.0;
  TargetNets t{zero_mlp({1, 1, 1}), zero_mlp({1, 1, 1}), 0.001};
  for (int i = 0; i < 1000; ++i)
    target_soft_update(t, live, zero_mlp({1, 1, 1}), 0.001);
  double expect = 1.0 - std::pow(0.999, 1000.0);
  REQUIRE(t.actor_target.w1(0, 0) == Catch::Approx(expect).epsilon(1e-9));
}
