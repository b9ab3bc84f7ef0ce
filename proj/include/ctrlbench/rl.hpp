#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "ctrlbench/envs.hpp"
#include "ctrlbench/net.hpp"

namespace ctrlbench {

struct AdvantageBatch {
  Vec advantages;     // A_t
  Vec value_targets;  // A_t + v(s_t)
  Vec td_errors;      // delta_t
};

// Truncated generalized advantage estimation over one collected segment.
// delta_t = r_t + gamma*v(s_{t+1})*(1-done_t) - v(s_t)
// A_t     = sum_{k=0}^{T-t-1} (gamma*lambda)^k delta_{t+k}
// `values` holds v(s_0..s_T); the appended bootstrap value is 0 when the
// segment ends at a terminal state.
inline AdvantageBatch compute_gae(const Vec& rewards, const Vec& values,
                                  const std::vector<unsigned char>& dones,
                                  double gamma, double lambda) {
  const Eigen::Index T = rewards.size();
  if (values.size() != T + 1)
    throw std::invalid_argument("compute_gae: values must have length T+1");
  if (static_cast<Eigen::Index>(dones.size()) != T)
    throw std::invalid_argument("compute_gae: dones must have length T");
  AdvantageBatch out{Vec(T), Vec(T), Vec(T)};
  for (Eigen::Index t = 0; t < T; ++t) {
    double not_done = dones[t] ? 0.0 : 1.0;
    out.td_errors(t) = rewards(t) + gamma * values(t + 1) * not_done - values(t);
  }
  double acc = 0.0;
  for (Eigen::Index t = T - 1; t >= 0; --t) {
    acc = out.td_errors(t) + gamma * lambda * acc;
    out.advantages(t) = acc;
  }
  out.value_targets = out.advantages + values.head(T);
  return out;
}

struct SurrogateResult {
  double loss = 0.0;   // -mean(min(r A, clip(r) A))
  Vec dloss_dlogp;     // gradient w.r.t. logp_new; zero on binding clips
};

// PPO clipped surrogate. r_t = exp(logp_new - logp_old); the objective is
// flat wherever the clipped branch is strictly better, so those elements
// carry zero gradient.
inline SurrogateResult clipped_surrogate(const Vec& logp_new,
                                         const Vec& logp_old, const Vec& adv,
                                         double eps) {
  const Eigen::Index n = logp_new.size();
  if (logp_old.size() != n || adv.size() != n)
    throw std::invalid_argument("clipped_surrogate: length mismatch");
  if (eps <= 0.0)
    throw std::invalid_argument("clipped_surrogate: eps must be > 0");
  SurrogateResult out;
  out.dloss_dlogp = Vec::Zero(n);
  double objective = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double r = std::exp(logp_new(i) - logp_old(i));
    double unclipped = r * adv(i);
    double clipped = clip(r, 1.0 - eps, 1.0 + eps) * adv(i);
    if (unclipped <= clipped) {
      objective += unclipped;
      out.dloss_dlogp(i) = -unclipped / static_cast<double>(n);
    } else {
      objective += clipped;
    }
  }
  out.loss = -objective / static_cast<double>(n);
  return out;
}

// Semi-gradient TD target; treated as a constant in differentiation.
inline double critic_td_target(double r, double v_next, bool done,
                               double gamma) {
  return r + gamma * v_next * (done ? 0.0 : 1.0);
}

// grad_theta log pi(a|s) * delta, with delta = r + gamma*v(s')*(1-done) - v(s).
// Ascent direction: the caller negates before handing it to Adam.
inline FlatParams a3c_actor_gradient(const MlpParams& policy, const Vec& s,
                                     const Vec& a, double delta) {
  ForwardCache c = forward_cached(policy, s);
  Vec upstream = (a - c.y) * delta;
  return backward(policy, c, upstream).param_grad;
}

// Composition step of the deterministic policy gradient: pushes dq/da
// through the actor, giving grad_theta q(s, mu(s|theta)).
inline FlatParams actor_gradient_from_dq_da(const MlpParams& actor,
                                            const Vec& s, const Vec& dq_da) {
  ForwardCache c = forward_cached(actor, s);
  return backward(actor, c, dq_da).param_grad;
}

// Deterministic policy gradient: backprop dq/da through the critic at
// a = mu(s), then through the actor. Ascent on q; caller negates for Adam.
// The critic input is the concatenation (s, a).
inline FlatParams ddpg_actor_gradient(const MlpParams& actor,
                                      const MlpParams& critic, const Vec& s) {
  ForwardCache ca = forward_cached(actor, s);
  Vec z(s.size() + ca.y.size());
  z << s, ca.y;
  ForwardCache cc = forward_cached(critic, z);
  Vec dq_dz = backward(critic, cc, Vec::Ones(1)).input_grad;
  Vec dq_da = dq_dz.tail(ca.y.size());
  return backward(actor, ca, dq_da).param_grad;
}

// Ornstein-Uhlenbeck exploration noise, mean-reverting to zero.
struct OuState {
  Vec x;
  double theta = 0.15;
  double sigma = 0.2;

  explicit OuState(int dim = 1, double theta_ = 0.15, double sigma_ = 0.2)
      : x(Vec::Zero(dim)), theta(theta_), sigma(sigma_) {}
};

inline Vec ou_step(OuState& st, Rng& rng) {
  for (Eigen::Index i = 0; i < st.x.size(); ++i)
    st.x(i) += st.theta * (0.0 - st.x(i)) + st.sigma * gaussian(rng);
  return st.x;
}

// Fixed-capacity ring buffer of transitions with uniform sampling
// (with replacement). Push and sample never run concurrently; the harness
// lock serializes access to shared instances.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0)
      throw std::invalid_argument("ReplayBuffer: capacity must be > 0");
  }

  void push(const Transition& t) {
    if (data_.size() < capacity_) {
      data_.push_back(t);
    } else {
      data_[next_] = t;
    }
    next_ = (next_ + 1) % capacity_;
  }

  std::vector<Transition> sample(std::size_t batch, Rng& rng) const {
    if (data_.size() < batch)
      throw std::runtime_error("replay_sample: buffer holds " +
                               std::to_string(data_.size()) +
                               " transitions, need " + std::to_string(batch));
    std::vector<Transition> out;
    out.reserve(batch);
    std::uniform_int_distribution<std::size_t> pick(0, data_.size() - 1);
    for (std::size_t i = 0; i < batch; ++i) out.push_back(data_[pick(rng)]);
    return out;
  }

  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Transition& at(std::size_t i) const { return data_.at(i); }

 private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::vector<Transition> data_;
};

// Slowly tracking copies used for bootstrap targets.
struct TargetNets {
  MlpParams actor_target;
  MlpParams critic_target;
  double tau = 0.001;
};

inline void soft_update(MlpParams& target, const MlpParams& live, double tau) {
  if (!(target.spec == live.spec))
    throw std::invalid_argument("soft_update: spec mismatch");
  target.w1 = tau * live.w1 + (1.0 - tau) * target.w1;
  target.b1 = tau * live.b1 + (1.0 - tau) * target.b1;
  target.w2 = tau * live.w2 + (1.0 - tau) * target.w2;
  target.b2 = tau * live.b2 + (1.0 - tau) * target.b2;
  target.w3 = tau * live.w3 + (1.0 - tau) * target.w3;
  target.b3 = tau * live.b3 + (1.0 - tau) * target.b3;
}

inline void target_soft_update(TargetNets& targets, const MlpParams& live_actor,
                               const MlpParams& live_critic, double tau) {
  soft_update(targets.actor_target, live_actor, tau);
  soft_update(targets.critic_target, live_critic, tau);
}

}  // namespace ctrlbench
