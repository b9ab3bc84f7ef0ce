#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "ctrlbench/net.hpp"
#include "ctrlbench/util.hpp"

namespace ctrlbench {

struct EnvSpec {
  int obs_dim = 0;
  int action_dim = 0;
  Vec action_low, action_high;
  int max_episode_steps = 0;
};

struct StepResult {
  Vec observation;
  double reward = 0.0;
  bool done = false;
  int steps_elapsed = 0;
};

// One (s, a, r, s', done) interaction record. `a` is the pre-clip policy
// output; the environment received the clipped value.
struct Transition {
  Vec s;
  Vec a;
  double r = 0.0;
  Vec s_next;
  bool done = false;
};

// Single-threaded environment instance; the harness creates one per worker.
// step() counts calls for accounting cross-checks and enforces the episode
// contract (stepping a finished episode throws).
class Environment {
 public:
  virtual ~Environment() = default;
  virtual const EnvSpec& spec() const = 0;

  Vec reset(std::uint64_t seed) {
    episode_active_ = true;
    steps_ = 0;
    return do_reset(seed);
  }

  StepResult step(const Vec& action) {
    if (!episode_active_)
      throw std::logic_error("Environment::step: episode already finished");
    ++total_step_calls_;
    ++steps_;
    StepResult r = do_step(action);
    r.steps_elapsed = steps_;
    if (steps_ >= spec().max_episode_steps) r.done = true;
    if (r.done) episode_active_ = false;
    return r;
  }

  bool episode_active() const { return episode_active_; }
  int steps_elapsed() const { return steps_; }
  long long total_step_calls() const { return total_step_calls_; }

 protected:
  virtual Vec do_reset(std::uint64_t seed) = 0;
  virtual StepResult do_step(const Vec& action) = 0;

  void mark_active() { episode_active_ = true; }

 private:
  bool episode_active_ = false;
  int steps_ = 0;
  long long total_step_calls_ = 0;
};

// Classic torque-limited pendulum swing-up. g=10, m=1, l=1, dt=0.05,
// horizon 200, torque in [-2, 2]. Reward is the negative cost of the
// pre-step state plus the applied torque.
class Pendulum : public Environment {
 public:
  Pendulum() {
    spec_.obs_dim = 3;
    spec_.action_dim = 1;
    spec_.action_low = Vec::Constant(1, -kMaxTorque);
    spec_.action_high = Vec::Constant(1, kMaxTorque);
    spec_.max_episode_steps = 200;
  }

  const EnvSpec& spec() const override { return spec_; }

  // test hook
  Vec set_state(double theta, double omega) {
    theta_ = theta;
    omega_ = omega;
    mark_active();
    return observation();
  }

  double theta() const { return theta_; }
  double omega() const { return omega_; }

  static double wrap_angle(double a) {
    a = std::fmod(a + std::numbers::pi, 2.0 * std::numbers::pi);
    if (a < 0) a += 2.0 * std::numbers::pi;
    return a - std::numbers::pi;
  }

 protected:
  Vec do_reset(std::uint64_t seed) override {
    Rng rng(seed);
    theta_ = uniform(rng, -std::numbers::pi, std::numbers::pi);
    omega_ = uniform(rng, -1.0, 1.0);
    return observation();
  }

  StepResult do_step(const Vec& action) override {
    double u = clip(action(0), -kMaxTorque, kMaxTorque);
    double th = wrap_angle(theta_);
    double cost = th * th + 0.1 * omega_ * omega_ + 0.001 * u * u;
    omega_ = clip(
        omega_ + (3.0 * kG / (2.0 * kL) * std::sin(theta_) +
                  3.0 / (kM * kL * kL) * u) * kDt,
        -kMaxSpeed, kMaxSpeed);
    theta_ += omega_ * kDt;
    StepResult r;
    r.observation = observation();
    r.reward = -cost;
    r.done = false;
    return r;
  }

 private:
  Vec observation() const {
    Vec o(3);
    o << std::cos(theta_), std::sin(theta_), omega_;
    return o;
  }

  static constexpr double kG = 10.0;
  static constexpr double kM = 1.0;
  static constexpr double kL = 1.0;
  static constexpr double kDt = 0.05;
  static constexpr double kMaxTorque = 2.0;
  static constexpr double kMaxSpeed = 8.0;

  EnvSpec spec_;
  double theta_ = 0.0;
  double omega_ = 0.0;
};

// One-dimensional vertical lander. Thrust in [0, 1] gives acceleration
// 2u - 1 (gravity 1), dt = 0.1. Each unit of thrust costs reward; touching
// down pays +100 if |v| <= 0.5, else -100; timing out at 500 steps pays
// nothing. The hover policy is a local optimum that strictly beats free
// fall, reproducing the do-nothing-until-timeout trap.
class LanderLite : public Environment {
 public:
  LanderLite() {
    spec_.obs_dim = 2;
    spec_.action_dim = 1;
    spec_.action_low = Vec::Constant(1, 0.0);
    spec_.action_high = Vec::Constant(1, 1.0);
    spec_.max_episode_steps = 500;
  }

  const EnvSpec& spec() const override { return spec_; }

  double altitude() const { return h_; }
  double velocity() const { return v_; }
  double fuel_spent() const { return fuel_; }

 protected:
  Vec do_reset(std::uint64_t) override {
    h_ = 5.0;
    v_ = 0.0;
    fuel_ = 0.0;
    return observation();
  }

  StepResult do_step(const Vec& action) override {
    double u = clip(action(0), 0.0, 1.0);
    fuel_ += u;
    v_ += (2.0 * u - 1.0) * kDt;
    double raw_h = h_ + v_ * kDt;
    bool touched = raw_h <= 0.0;
    h_ = touched ? 0.0 : raw_h;
    StepResult r;
    r.reward = -0.1 * u;
    if (touched) {
      r.reward += (std::abs(v_) <= kSafeSpeed) ? 100.0 : -100.0;
      r.done = true;
    }
    r.observation = observation();
    return r;
  }

 private:
  Vec observation() const {
    Vec o(2);
    o << h_, v_;
    return o;
  }

  static constexpr double kDt = 0.1;
  static constexpr double kSafeSpeed = 0.5;

  EnvSpec spec_;
  double h_ = 5.0;
  double v_ = 0.0;
  double fuel_ = 0.0;
};

using EnvFactory = std::function<std::unique_ptr<Environment>()>;

inline std::map<std::string, EnvFactory>& env_registry() {
  static std::map<std::string, EnvFactory> reg = {
      {"pendulum", [] { return std::make_unique<Pendulum>(); }},
      {"lander_lite", [] { return std::make_unique<LanderLite>(); }},
  };
  return reg;
}

inline void register_env(const std::string& id, EnvFactory factory) {
  env_registry()[id] = std::move(factory);
}

inline std::unique_ptr<Environment> make_env(const std::string& id) {
  auto& reg = env_registry();
  auto it = reg.find(id);
  if (it == reg.end())
    throw std::invalid_argument("unknown environment id: " + id);
  return it->second();
}

struct RolloutResult {
  std::vector<Transition> transitions;
  double episodic_return = 0.0;  // undiscounted sum of rewards
};

// Runs one episode (at most `horizon` transitions) under `policy`.
inline RolloutResult rollout(Environment& env,
                             const std::function<Vec(const Vec&)>& policy,
                             int horizon, std::uint64_t seed) {
  RolloutResult out;
  Vec obs = env.reset(seed);
  for (int t = 0; t < horizon; ++t) {
    Vec a = policy(obs);
    StepResult sr = env.step(a);
    out.transitions.push_back({obs, a, sr.reward, sr.observation, sr.done});
    out.episodic_return += sr.reward;
    obs = sr.observation;
    if (sr.done) break;
  }
  return out;
}

// Gaussian-policy rollout; stochastic draws mu(s)+z, deterministic uses
// mu(s). Actions are clipped at the env boundary, the unclipped value is
// recorded in the transition.
inline RolloutResult rollout(Environment& env, const GaussianPolicy& policy,
                             int horizon, bool stochastic, std::uint64_t seed) {
  Rng action_rng(derive_seed(seed, stream_id("rollout_actions")));
  const EnvSpec& es = env.spec();
  RolloutResult out;
  Vec obs = env.reset(seed);
  for (int t = 0; t < horizon; ++t) {
    Vec a = stochastic ? sample_action(policy, obs, action_rng)
                       : deterministic_action(policy, obs);
    Vec clipped = a.cwiseMax(es.action_low).cwiseMin(es.action_high);
    StepResult sr = env.step(clipped);
    out.transitions.push_back({obs, a, sr.reward, sr.observation, sr.done});
    out.episodic_return += sr.reward;
    obs = sr.observation;
    if (sr.done) break;
  }
  return out;
}

}  // namespace ctrlbench
