#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "ctrlbench/curves.hpp"
#include "ctrlbench/envs.hpp"
#include "ctrlbench/es.hpp"
#include "ctrlbench/neat.hpp"
#include "ctrlbench/net.hpp"
#include "ctrlbench/normalize.hpp"
#include "ctrlbench/rl.hpp"
#include "ctrlbench/util.hpp"

namespace ctrlbench {

enum class Algo { kCa3c, kP3o, kD3pg, kNes, kCmaes, kNeat };

inline const char* algo_name(Algo a) {
  switch (a) {
    case Algo::kCa3c: return "ca3c";
    case Algo::kP3o: return "p3o";
    case Algo::kD3pg: return "d3pg";
    case Algo::kNes: return "nes";
    case Algo::kCmaes: return "cmaes";
    case Algo::kNeat: return "neat";
  }
  return "?";
}

inline Algo parse_algo(const std::string& s) {
  if (s == "ca3c") return Algo::kCa3c;
  if (s == "p3o") return Algo::kP3o;
  if (s == "d3pg") return Algo::kD3pg;
  if (s == "nes") return Algo::kNes;
  if (s == "cmaes") return Algo::kCmaes;
  if (s == "neat") return Algo::kNeat;
  throw std::invalid_argument("unknown algorithm id: " + s);
}

inline bool is_gradient_algo(Algo a) {
  return a == Algo::kCa3c || a == Algo::kP3o || a == Algo::kD3pg;
}

// ---------------------------------------------------------------------------
// Shared parameter store. One exclusive lock guards everything inside;
// mutation is only reachable through a held StoreLock token, and the store
// counts any access that slips through without the lock (none should).
// ---------------------------------------------------------------------------

class SharedStore;

class StoreLock {
 public:
  explicit StoreLock(SharedStore& store);
  ~StoreLock();
  StoreLock(const StoreLock&) = delete;
  StoreLock& operator=(const StoreLock&) = delete;

 private:
  friend class SharedStore;
  SharedStore& store_;
  std::unique_lock<std::mutex> lock_;
};

class SharedStore {
 public:
  struct State {
    FlatParams policy_params;
    FlatParams value_params;  // critic for d3pg
    AdamState policy_adam;
    AdamState value_adam;
    RunningStats obs_stats{1};
    RunningStats reward_stats{1};
    std::unique_ptr<ReplayBuffer> replay;  // d3pg
    std::unique_ptr<TargetNets> targets;   // d3pg
    long long total_env_steps = 0;
    long long total_updates = 0;
    long long next_eval_mark = 0;
  };

  State& state(const StoreLock& token) {
    if (&token.store_ != this || holders_.load() != 1)
      unlocked_accesses_.fetch_add(1);
    return state_;
  }

  long long unlocked_accesses() const { return unlocked_accesses_.load(); }

 private:
  friend class StoreLock;
  std::mutex mu_;
  std::atomic<int> holders_{0};
  std::atomic<long long> unlocked_accesses_{0};
  State state_;
};

inline StoreLock::StoreLock(SharedStore& store)
    : store_(store), lock_(store.mu_) {
  store_.holders_.fetch_add(1);
}

inline StoreLock::~StoreLock() {
  store_.holders_.fetch_sub(1);
}

// ---------------------------------------------------------------------------
// Fixed-size worker pool with a generation barrier: run_indexed() returns
// only after every task has finished. Tasks receive their own index plus the
// index of the worker slot executing them (for per-worker environments).
// ---------------------------------------------------------------------------

class WorkerPool {
 public:
  explicit WorkerPool(int workers) : workers_(workers) {
    if (workers < 1) throw std::invalid_argument("WorkerPool: need >= 1 worker");
    for (int w = 0; w < workers; ++w)
      threads_.emplace_back([this, w] { worker_loop(w); });
  }

  ~WorkerPool() {
    {
      std::unique_lock<std::mutex> lock(mu_);
      stop_ = true;
      cv_.notify_all();
    }
    for (auto& t : threads_) t.join();
  }

  int workers() const { return workers_; }

  void run_indexed(int count,
                   const std::function<void(int task, int worker)>& fn) {
    if (count == 0) return;
    std::unique_lock<std::mutex> lock(mu_);
    fn_ = &fn;
    next_task_ = 0;
    tasks_total_ = count;
    tasks_done_ = 0;
    ++epoch_;
    cv_.notify_all();
    done_cv_.wait(lock, [this] { return tasks_done_ == tasks_total_; });
    fn_ = nullptr;
  }

 private:
  void worker_loop(int w) {
    long long seen_epoch = 0;
    while (true) {
      std::unique_lock<std::mutex> lock(mu_);
      cv_.wait(lock, [&] { return stop_ || (fn_ && epoch_ != seen_epoch); });
      if (stop_) return;
      seen_epoch = epoch_;
      while (next_task_ < tasks_total_) {
        int task = next_task_++;
        const auto* fn = fn_;
        lock.unlock();
        (*fn)(task, w);
        lock.lock();
        if (++tasks_done_ == tasks_total_) done_cv_.notify_all();
      }
    }
  }

  int workers_;
  std::vector<std::thread> threads_;
  std::mutex mu_;
  std::condition_variable cv_, done_cv_;
  const std::function<void(int, int)>* fn_ = nullptr;
  int next_task_ = 0;
  int tasks_total_ = 0;
  int tasks_done_ = 0;
  long long epoch_ = 0;
  bool stop_ = false;
};

// ---------------------------------------------------------------------------
// Run configuration and result
// ---------------------------------------------------------------------------

struct HarnessConfig {
  Algo algo = Algo::kP3o;
  std::string env_id = "pendulum";
  int hidden = 16;
  int workers = 4;
  long long max_env_steps = 100000;
  std::uint64_t seed = 0;
  std::string run_id = "run";

  double lr = 1e-3;
  double gamma = 0.99;
  bool reward_norm = true;

  // p3o
  double gae_lambda = 0.97;
  double clip_eps = 0.2;
  int p3o_segment = 512;
  bool normalize_advantages = true;

  // ca3c
  int ca3c_segment = 20;

  // d3pg
  int replay_capacity = 1000000;
  int batch_size = 64;
  double tau = 0.001;
  double ou_theta = 0.15;
  double ou_sigma = 0.2;
  int warmup = 1000;

  // nes
  double nes_sigma = 0.1;
  double nes_alpha = 0.1;
  int nes_population = 50;
  bool nes_mirrored = true;

  // cmaes
  double cmaes_sigma0 = 1.0;
  int cmaes_lambda = 0;  // 0 = 4 + floor(3 ln d)

  // es shared
  int fitness_episodes = 1;       // nes/cmaes episodes per individual
  int neat_fitness_episodes = 3;  // neat episodes per genome
  int test_episodes = 10;         // per-generation reporting episodes
  neat::NeatConfig neat;

  // rl evaluation: deterministic episode every eval_interval env steps;
  // 0 runs the free-running evaluator thread instead
  long long eval_interval = 1000;
};

struct RunResult {
  LearningCurve curve;
  long long total_env_steps = 0;
  long long total_updates = 0;
  std::vector<long long> worker_update_counts;
  long long recounted_env_steps = 0;  // sum of step() calls on training envs
  long long evaluator_episodes = 0;
  long long unlocked_accesses = 0;
  double wall_seconds = 0.0;
  std::string failure;  // non-empty: a worker aborted; the curve is partial

  // final artifacts for checkpointing
  MlpSpec policy_spec;
  FlatParams final_policy;
  RunningStats final_obs_stats{1};
  bool has_genome = false;
  neat::Genome best_genome;
};

namespace detail {

inline long long wall_ms_since(
    const std::chrono::steady_clock::time_point& start) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::steady_clock::now() - start)
      .count();
}

// Deterministic evaluation episode: mean action, frozen stats snapshot,
// actions clipped at the env boundary.
inline double deterministic_episode(Environment& env, const MlpParams& policy,
                                    const RunningStats& stats,
                                    std::uint64_t seed) {
  const EnvSpec& es = env.spec();
  Vec obs = env.reset(seed);
  double ret = 0.0;
  while (true) {
    Vec a = forward(policy, normalize_state(stats, obs));
    a = a.cwiseMax(es.action_low).cwiseMin(es.action_high);
    StepResult sr = env.step(a);
    ret += sr.reward;
    obs = sr.observation;
    if (sr.done) break;
  }
  return ret;
}

}  // namespace detail

// Free-running deterministic evaluator: snapshot the policy and stats under
// the lock, run one deterministic episode, emit a point, repeat. Evaluation
// steps never touch the training counters.
inline long long run_evaluator(SharedStore& store, Environment& env,
                               const MlpSpec& policy_spec, std::uint64_t seed,
                               const std::function<bool()>& keep_going,
                               const std::function<void(CurvePoint)>& emit) {
  auto start = std::chrono::steady_clock::now();
  long long episodes = 0;
  while (keep_going()) {
    FlatParams params;
    RunningStats stats{1};
    long long steps_snapshot = 0;
    {
      StoreLock lock(store);
      auto& s = store.state(lock);
      params = s.policy_params;
      stats = s.obs_stats;
      steps_snapshot = s.total_env_steps;
    }
    MlpParams policy = unflatten(policy_spec, params);
    double ret = detail::deterministic_episode(
        env, policy, stats, derive_seed(seed, stream_id("evaluator"), episodes));
    emit({steps_snapshot, detail::wall_ms_since(start), ret});
    ++episodes;
  }
  return episodes;
}

// ---------------------------------------------------------------------------
// Parallel RL training (CA3C / P3O / D3PG)
// ---------------------------------------------------------------------------

namespace detail {

struct RlShared {
  const HarnessConfig* cfg = nullptr;
  SharedStore store;
  MlpSpec policy_spec, value_spec;
  EnvSpec env_spec;
  std::chrono::steady_clock::time_point start;
  std::mutex curve_mu;
  std::vector<CurvePoint> curve;
  std::atomic<long long> evaluator_episodes{0};
  std::atomic<bool> failed{false};
  std::string failure;
  std::mutex failure_mu;
};

struct ParamSnapshot {
  MlpParams policy;
  MlpParams value;
  RunningStats obs_stats{1};
  RunningStats reward_stats{1};
};

inline ParamSnapshot snapshot_params(RlShared& sh, const StoreLock& lock) {
  auto& s = sh.store.state(lock);
  ParamSnapshot snap;
  snap.policy = unflatten(sh.policy_spec, s.policy_params);
  snap.value = unflatten(sh.value_spec, s.value_params);
  snap.obs_stats = s.obs_stats;
  snap.reward_stats = s.reward_stats;
  return snap;
}

// Claims any evaluation marks crossed by the counter; returns the marks.
inline std::vector<long long> claim_eval_marks(SharedStore::State& s,
                                               long long eval_interval,
                                               long long max_steps) {
  std::vector<long long> marks;
  if (eval_interval <= 0) return marks;
  while (s.next_eval_mark <= s.total_env_steps && s.next_eval_mark <= max_steps) {
    marks.push_back(s.next_eval_mark);
    s.next_eval_mark += eval_interval;
  }
  return marks;
}

inline void emit_point(RlShared& sh, CurvePoint p) {
  std::lock_guard<std::mutex> g(sh.curve_mu);
  sh.curve.push_back(p);
}

// Runs the claimed evaluation marks outside the lock using the snapshot
// taken when they were claimed.
inline void run_claimed_evals(RlShared& sh, Environment& eval_env,
                              const std::vector<long long>& marks,
                              const FlatParams& policy_flat,
                              const RunningStats& stats) {
  if (marks.empty()) return;
  MlpParams policy = unflatten(sh.policy_spec, policy_flat);
  for (long long mark : marks) {
    double ret = deterministic_episode(
        eval_env, policy, stats,
        derive_seed(sh.cfg->seed, stream_id("eval_mark"),
                    static_cast<std::uint64_t>(mark)));
    emit_point(sh, {mark, wall_ms_since(sh.start), ret});
  }
}

// CA3C worker: collect a short on-policy segment, accumulate the policy
// gradient grad log pi * delta and the semi-gradient critic update over it,
// then apply both to the shared parameters in one locked visit.
inline void ca3c_worker(RlShared& sh, int w, Environment& env,
                        Environment& eval_env, long long& update_count) {
  const HarnessConfig& cfg = *sh.cfg;
  Rng action_rng = make_rng(cfg.seed, "ca3c_action", w);
  long long episode = 0;
  Vec obs = env.reset(derive_seed(cfg.seed, stream_id("episode"), w, episode));

  while (true) {
    if (sh.failed.load()) break;
    ParamSnapshot snap;
    {
      StoreLock lock(sh.store);
      auto& s = sh.store.state(lock);
      if (s.total_env_steps >= cfg.max_env_steps) break;
      snap = snapshot_params(sh, lock);
    }
    GaussianPolicy pi{snap.policy};

    std::vector<Transition> seg;
    seg.reserve(cfg.ca3c_segment);
    for (int t = 0; t < cfg.ca3c_segment; ++t) {
      Vec x = normalize_state(snap.obs_stats, obs);
      Vec a = sample_action(pi, x, action_rng);
      Vec clipped = a.cwiseMax(sh.env_spec.action_low).cwiseMin(sh.env_spec.action_high);
      StepResult sr = env.step(clipped);
      seg.push_back({obs, a, sr.reward, sr.observation, sr.done});
      obs = sr.observation;
      if (sr.done) {
        ++episode;
        obs = env.reset(derive_seed(cfg.seed, stream_id("episode"), w, episode));
        break;
      }
    }

    FlatParams policy_grad = FlatParams::Zero(sh.policy_spec.flat_size());
    FlatParams value_grad = FlatParams::Zero(sh.value_spec.flat_size());
    for (const Transition& tr : seg) {
      Vec x = normalize_state(snap.obs_stats, tr.s);
      Vec x_next = normalize_state(snap.obs_stats, tr.s_next);
      double r = cfg.reward_norm ? normalize_reward(snap.reward_stats, tr.r)
                                 : tr.r;
      ForwardCache vc = forward_cached(snap.value, x);
      double v_s = vc.y(0);
      double v_next = tr.done ? 0.0 : forward(snap.value, x_next)(0);
      double target = critic_td_target(r, v_next, tr.done, cfg.gamma);
      double delta = target - v_s;
      policy_grad += a3c_actor_gradient(snap.policy, x, tr.a, delta);
      value_grad += (v_s - target) * backward(snap.value, vc, Vec::Ones(1)).param_grad;
    }
    double inv = 1.0 / static_cast<double>(seg.size());
    policy_grad *= inv;
    value_grad *= inv;

    std::vector<long long> marks;
    FlatParams eval_params;
    RunningStats eval_stats{1};
    {
      StoreLock lock(sh.store);
      auto& s = sh.store.state(lock);
      for (const Transition& tr : seg) {
        s.obs_stats.update(tr.s);
        s.reward_stats.update(tr.r);
      }
      adam_step(s.policy_adam, s.policy_params, -policy_grad);
      adam_step(s.value_adam, s.value_params, value_grad);
      s.total_updates += 1;
      s.total_env_steps += static_cast<long long>(seg.size());
      marks = claim_eval_marks(s, cfg.eval_interval, cfg.max_env_steps);
      if (!marks.empty()) {
        eval_params = s.policy_params;
        eval_stats = s.obs_stats;
      }
    }
    update_count += 1;
    run_claimed_evals(sh, eval_env, marks, eval_params, eval_stats);
  }
}

// P3O worker: collect a fixed-length segment into the worker's own buffer
// (crossing episode boundaries), compute GAE advantages, then do exactly one
// full-batch clipped-surrogate update and one critic update, synchronized
// through the shared lock. The buffer is cleared afterwards.
inline void p3o_worker(RlShared& sh, int w, Environment& env,
                       Environment& eval_env, long long& update_count) {
  const HarnessConfig& cfg = *sh.cfg;
  Rng action_rng = make_rng(cfg.seed, "p3o_action", w);
  long long episode = 0;
  Vec obs = env.reset(derive_seed(cfg.seed, stream_id("episode"), w, episode));

  while (true) {
    if (sh.failed.load()) break;
    ParamSnapshot snap;
    {
      StoreLock lock(sh.store);
      auto& s = sh.store.state(lock);
      if (s.total_env_steps >= cfg.max_env_steps) break;
      snap = snapshot_params(sh, lock);
    }
    GaussianPolicy pi{snap.policy};

    const int T = cfg.p3o_segment;
    std::vector<Transition> seg;
    std::vector<Vec> xs;
    Vec logp_old(T);
    seg.reserve(T);
    xs.reserve(T);
    for (int t = 0; t < T; ++t) {
      Vec x = normalize_state(snap.obs_stats, obs);
      Vec mu = forward(snap.policy, x);
      Vec a = mu;
      for (Eigen::Index i = 0; i < a.size(); ++i) a(i) += gaussian(action_rng);
      logp_old(t) = gaussian_log_prob(a, mu);
      Vec clipped = a.cwiseMax(sh.env_spec.action_low).cwiseMin(sh.env_spec.action_high);
      StepResult sr = env.step(clipped);
      seg.push_back({obs, a, sr.reward, sr.observation, sr.done});
      xs.push_back(x);
      obs = sr.observation;
      if (sr.done) {
        ++episode;
        obs = env.reset(derive_seed(cfg.seed, stream_id("episode"), w, episode));
      }
    }

    Vec rewards(T);
    std::vector<unsigned char> dones(T);
    Vec values(T + 1);
    for (int t = 0; t < T; ++t) {
      rewards(t) = cfg.reward_norm
                       ? normalize_reward(snap.reward_stats, seg[t].r)
                       : seg[t].r;
      dones[t] = seg[t].done ? 1 : 0;
      values(t) = forward(snap.value, xs[t])(0);
    }
    values(T) = seg.back().done
                    ? 0.0
                    : forward(snap.value,
                              normalize_state(snap.obs_stats, seg.back().s_next))(0);

    AdvantageBatch adv = compute_gae(rewards, values, dones, cfg.gamma,
                                     cfg.gae_lambda);
    Vec a_hat = adv.advantages;
    if (cfg.normalize_advantages) {
      double m = a_hat.mean();
      double sd = std::sqrt((a_hat.array() - m).square().sum() /
                            static_cast<double>(T));
      a_hat = (a_hat.array() - m) / (sd + 1e-8);
    }

    // one batch update over the whole buffer
    SurrogateResult sur = clipped_surrogate(logp_old, logp_old, a_hat,
                                            cfg.clip_eps);
    FlatParams policy_grad = FlatParams::Zero(sh.policy_spec.flat_size());
    FlatParams value_grad = FlatParams::Zero(sh.value_spec.flat_size());
    for (int t = 0; t < T; ++t) {
      ForwardCache pc = forward_cached(snap.policy, xs[t]);
      Vec upstream = sur.dloss_dlogp(t) *
                     gaussian_log_prob_grad_mean(seg[t].a, pc.y);
      policy_grad += backward(snap.policy, pc, upstream).param_grad;
      ForwardCache vc = forward_cached(snap.value, xs[t]);
      value_grad += (vc.y(0) - adv.value_targets(t)) / static_cast<double>(T) *
                    backward(snap.value, vc, Vec::Ones(1)).param_grad;
    }

    std::vector<long long> marks;
    FlatParams eval_params;
    RunningStats eval_stats{1};
    {
      StoreLock lock(sh.store);
      auto& s = sh.store.state(lock);
      for (const Transition& tr : seg) {
        s.obs_stats.update(tr.s);
        s.reward_stats.update(tr.r);
      }
      adam_step(s.policy_adam, s.policy_params, policy_grad);
      adam_step(s.value_adam, s.value_params, value_grad);
      s.total_updates += 1;
      s.total_env_steps += T;
      marks = claim_eval_marks(s, cfg.eval_interval, cfg.max_env_steps);
      if (!marks.empty()) {
        eval_params = s.policy_params;
        eval_stats = s.obs_stats;
      }
    }
    update_count += 1;
    run_claimed_evals(sh, eval_env, marks, eval_params, eval_stats);
  }
}

// D3PG worker: every environment step pushes the transition into the shared
// replay buffer and, once warm, samples a batch, computes DDPG gradients
// against a parameter snapshot, and applies them under the lock together
// with the shared target-network soft update.
inline void d3pg_worker(RlShared& sh, int w, Environment& env,
                        Environment& eval_env, long long& update_count) {
  const HarnessConfig& cfg = *sh.cfg;
  Rng noise_rng = make_rng(cfg.seed, "d3pg_noise", w);
  Rng sample_rng = make_rng(cfg.seed, "d3pg_sample", w);
  OuState noise(sh.env_spec.action_dim, cfg.ou_theta, cfg.ou_sigma);
  long long episode = 0;
  Vec obs = env.reset(derive_seed(cfg.seed, stream_id("episode"), w, episode));

  MlpParams actor = unflatten(sh.policy_spec, FlatParams::Zero(sh.policy_spec.flat_size()));
  RunningStats act_stats{sh.env_spec.obs_dim};
  {
    StoreLock lock(sh.store);
    auto& s = sh.store.state(lock);
    actor = unflatten(sh.policy_spec, s.policy_params);
    act_stats = s.obs_stats;
  }

  while (true) {
    if (sh.failed.load()) break;
    Vec x = normalize_state(act_stats, obs);
    Vec a = forward(actor, x) + ou_step(noise, noise_rng);
    Vec clipped = a.cwiseMax(sh.env_spec.action_low).cwiseMin(sh.env_spec.action_high);
    StepResult sr = env.step(clipped);
    Transition tr{obs, clipped, sr.reward, sr.observation, sr.done};

    bool learn = false;
    std::vector<Transition> batch;
    MlpParams critic, actor_t, critic_t;
    RunningStats reward_stats{1};
    bool done_run = false;
    {
      StoreLock lock(sh.store);
      auto& s = sh.store.state(lock);
      s.obs_stats.update(tr.s);
      s.reward_stats.update(tr.r);
      s.replay->push(tr);
      s.total_env_steps += 1;
      done_run = s.total_env_steps >= cfg.max_env_steps;
      actor = unflatten(sh.policy_spec, s.policy_params);
      act_stats = s.obs_stats;
      if (static_cast<int>(s.replay->size()) >= cfg.warmup) {
        learn = true;
        batch = s.replay->sample(cfg.batch_size, sample_rng);
        critic = unflatten(sh.value_spec, s.value_params);
        actor_t = s.targets->actor_target;
        critic_t = s.targets->critic_target;
        reward_stats = s.reward_stats;
      }
    }

    if (learn) {
      FlatParams actor_grad = FlatParams::Zero(sh.policy_spec.flat_size());
      FlatParams critic_grad = FlatParams::Zero(sh.value_spec.flat_size());
      double inv = 1.0 / static_cast<double>(batch.size());
      for (const Transition& b : batch) {
        Vec bx = normalize_state(act_stats, b.s);
        Vec bx_next = normalize_state(act_stats, b.s_next);
        double br = cfg.reward_norm ? normalize_reward(reward_stats, b.r) : b.r;
        // critic: semi-gradient TD with shared target networks
        Vec a_next = forward(actor_t, bx_next);
        Vec zt(bx_next.size() + a_next.size());
        zt << bx_next, a_next;
        double q_next = forward(critic_t, zt)(0);
        double target = critic_td_target(br, q_next, b.done, cfg.gamma);
        Vec z(bx.size() + b.a.size());
        z << bx, b.a;
        ForwardCache qc = forward_cached(critic, z);
        critic_grad += inv * (qc.y(0) - target) *
                       backward(critic, qc, Vec::Ones(1)).param_grad;
        // actor: deterministic policy gradient (ascent on q)
        actor_grad += inv * ddpg_actor_gradient(actor, critic, bx);
      }

      std::vector<long long> marks;
      FlatParams eval_params;
      RunningStats eval_stats{1};
      {
        StoreLock lock(sh.store);
        auto& s = sh.store.state(lock);
        adam_step(s.policy_adam, s.policy_params, -actor_grad);
        adam_step(s.value_adam, s.value_params, critic_grad);
        target_soft_update(*s.targets, unflatten(sh.policy_spec, s.policy_params),
                           unflatten(sh.value_spec, s.value_params), cfg.tau);
        s.total_updates += 1;
        marks = claim_eval_marks(s, cfg.eval_interval, cfg.max_env_steps);
        if (!marks.empty()) {
          eval_params = s.policy_params;
          eval_stats = s.obs_stats;
        }
      }
      update_count += 1;
      run_claimed_evals(sh, eval_env, marks, eval_params, eval_stats);
    } else if (cfg.eval_interval > 0) {
      std::vector<long long> marks;
      FlatParams eval_params;
      RunningStats eval_stats{1};
      {
        StoreLock lock(sh.store);
        auto& s = sh.store.state(lock);
        marks = claim_eval_marks(s, cfg.eval_interval, cfg.max_env_steps);
        if (!marks.empty()) {
          eval_params = s.policy_params;
          eval_stats = s.obs_stats;
        }
      }
      run_claimed_evals(sh, eval_env, marks, eval_params, eval_stats);
    }

    obs = sr.observation;
    if (sr.done) {
      ++episode;
      noise = OuState(sh.env_spec.action_dim, cfg.ou_theta, cfg.ou_sigma);
      obs = env.reset(derive_seed(cfg.seed, stream_id("episode"), w, episode));
    }
    if (done_run) break;
  }
}

}  // namespace detail

// Launches N workers sharing one parameter store; every shared mutation
// happens while holding the store's exclusive lock and no gradient is ever
// dropped. Returns the learning curve plus protocol counters.
inline RunResult run_parallel_rl(const HarnessConfig& cfg) {
  if (!is_gradient_algo(cfg.algo))
    throw std::invalid_argument("run_parallel_rl: not a gradient algorithm");
  if (cfg.workers < 1)
    throw std::invalid_argument("run_parallel_rl: workers must be >= 1");

  detail::RlShared sh;
  sh.cfg = &cfg;
  auto probe = make_env(cfg.env_id);
  sh.env_spec = probe->spec();
  sh.policy_spec = {sh.env_spec.obs_dim, cfg.hidden, sh.env_spec.action_dim};
  sh.value_spec = cfg.algo == Algo::kD3pg
                      ? MlpSpec{sh.env_spec.obs_dim + sh.env_spec.action_dim,
                                cfg.hidden, 1}
                      : MlpSpec{sh.env_spec.obs_dim, cfg.hidden, 1};
  sh.start = std::chrono::steady_clock::now();

  {
    StoreLock lock(sh.store);
    auto& s = sh.store.state(lock);
    Rng pol_rng = make_rng(cfg.seed, "policy_init");
    Rng val_rng = make_rng(cfg.seed, "value_init");
    MlpParams policy = init_mlp(sh.policy_spec, pol_rng);
    MlpParams value = init_mlp(sh.value_spec, val_rng);
    s.policy_params = flatten(policy);
    s.value_params = flatten(value);
    s.policy_adam = AdamState(sh.policy_spec.flat_size(), cfg.lr);
    s.value_adam = AdamState(sh.value_spec.flat_size(), cfg.lr);
    s.obs_stats = RunningStats(sh.env_spec.obs_dim);
    s.reward_stats = RunningStats(1);
    s.next_eval_mark = 0;
    if (cfg.algo == Algo::kD3pg) {
      s.replay = std::make_unique<ReplayBuffer>(cfg.replay_capacity);
      s.targets = std::make_unique<TargetNets>(TargetNets{policy, value, cfg.tau});
    }
  }

  std::vector<std::unique_ptr<Environment>> train_envs, eval_envs;
  for (int w = 0; w < cfg.workers; ++w) {
    train_envs.push_back(make_env(cfg.env_id));
    eval_envs.push_back(make_env(cfg.env_id));
  }

  // initial point at mark 0 before training starts
  if (cfg.eval_interval > 0) {
    std::vector<long long> first;
    FlatParams params;
    RunningStats stats{1};
    {
      StoreLock lock(sh.store);
      auto& s = sh.store.state(lock);
      first = detail::claim_eval_marks(s, cfg.eval_interval, cfg.max_env_steps);
      params = s.policy_params;
      stats = s.obs_stats;
    }
    detail::run_claimed_evals(sh, *eval_envs[0], first, params, stats);
  }

  std::vector<long long> update_counts(cfg.workers, 0);
  std::atomic<bool> evaluator_stop{false};
  std::thread evaluator;
  std::unique_ptr<Environment> evaluator_env;
  if (cfg.eval_interval <= 0) {
    evaluator_env = make_env(cfg.env_id);
    evaluator = std::thread([&] {
      long long n = run_evaluator(
          sh.store, *evaluator_env, sh.policy_spec, cfg.seed,
          [&] { return !evaluator_stop.load(); },
          [&](CurvePoint p) { detail::emit_point(sh, p); });
      sh.evaluator_episodes.store(n);
    });
  }

  std::vector<std::thread> workers;
  for (int w = 0; w < cfg.workers; ++w) {
    workers.emplace_back([&, w] {
      try {
        switch (cfg.algo) {
          case Algo::kCa3c:
            detail::ca3c_worker(sh, w, *train_envs[w], *eval_envs[w],
                                update_counts[w]);
            break;
          case Algo::kP3o:
            detail::p3o_worker(sh, w, *train_envs[w], *eval_envs[w],
                               update_counts[w]);
            break;
          case Algo::kD3pg:
            detail::d3pg_worker(sh, w, *train_envs[w], *eval_envs[w],
                                update_counts[w]);
            break;
          default:
            break;
        }
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> g(sh.failure_mu);
        sh.failed.store(true);
        if (sh.failure.empty())
          sh.failure = std::string("worker ") + std::to_string(w) + ": " + e.what();
      }
    });
  }
  for (auto& t : workers) t.join();
  evaluator_stop.store(true);
  if (evaluator.joinable()) evaluator.join();

  RunResult out;
  out.curve.run_id = cfg.run_id;
  out.curve.algo = algo_name(cfg.algo);
  out.curve.env = cfg.env_id;
  out.curve.hidden = cfg.hidden;
  {
    std::lock_guard<std::mutex> g(sh.curve_mu);
    out.curve.points = sh.curve;
  }
  std::stable_sort(out.curve.points.begin(), out.curve.points.end(),
                   [](const CurvePoint& a, const CurvePoint& b) {
                     return a.env_steps < b.env_steps;
                   });
  {
    StoreLock lock(sh.store);
    auto& s = sh.store.state(lock);
    out.total_env_steps = s.total_env_steps;
    out.total_updates = s.total_updates;
    out.final_policy = s.policy_params;
    out.final_obs_stats = s.obs_stats;
  }
  out.policy_spec = sh.policy_spec;
  out.worker_update_counts = update_counts;
  for (const auto& e : train_envs) out.recounted_env_steps += e->total_step_calls();
  out.evaluator_episodes = sh.evaluator_episodes.load();
  out.unlocked_accesses = sh.store.unlocked_accesses();
  out.wall_seconds = detail::wall_ms_since(sh.start) / 1000.0;
  if (sh.failed.load()) out.failure = sh.failure;
  return out;
}

// ---------------------------------------------------------------------------
// Evolutionary training (NES / CMA-ES / NEAT): parallel fitness evaluation
// with a generation barrier, then 10 deterministic test episodes for the
// generation's best individual, which become one curve point.
// ---------------------------------------------------------------------------

namespace detail {

struct EsEvalResult {
  double fitness = 0.0;
  long long steps = 0;
  std::vector<Vec> raw_obs;
};

// Evaluates one individual: k full episodes, deterministic actions,
// observations normalized with the generation-start stats snapshot.
template <typename ActFn>
EsEvalResult evaluate_individual(Environment& env, const ActFn& act,
                                 const RunningStats& stats, int episodes,
                                 std::uint64_t seed) {
  EsEvalResult out;
  const EnvSpec& es = env.spec();
  for (int ep = 0; ep < episodes; ++ep) {
    Vec obs = env.reset(derive_seed(seed, stream_id("fitness_ep"), ep));
    while (true) {
      out.raw_obs.push_back(obs);
      Vec a = act(normalize_state(stats, obs));
      a = a.cwiseMax(es.action_low).cwiseMin(es.action_high);
      StepResult sr = env.step(a);
      out.fitness += sr.reward;
      out.steps += 1;
      obs = sr.observation;
      if (sr.done) break;
    }
  }
  out.fitness /= static_cast<double>(episodes);
  return out;
}

}  // namespace detail

inline RunResult run_es(const HarnessConfig& cfg) {
  if (is_gradient_algo(cfg.algo))
    throw std::invalid_argument("run_es: not an evolutionary algorithm");
  auto probe = make_env(cfg.env_id);
  EnvSpec env_spec = probe->spec();
  MlpSpec policy_spec{env_spec.obs_dim, cfg.hidden, env_spec.action_dim};
  auto start = std::chrono::steady_clock::now();

  WorkerPool pool(cfg.workers);
  std::vector<std::unique_ptr<Environment>> fit_envs;
  for (int w = 0; w < cfg.workers; ++w) fit_envs.push_back(make_env(cfg.env_id));
  auto test_env = make_env(cfg.env_id);

  RunningStats obs_stats(env_spec.obs_dim);
  long long total_steps = 0;
  long long generation = 0;

  RunResult out;
  out.curve.run_id = cfg.run_id;
  out.curve.algo = algo_name(cfg.algo);
  out.curve.env = cfg.env_id;
  out.curve.hidden = cfg.hidden;
  out.policy_spec = policy_spec;

  // Runs the 10 deterministic test episodes for the generation's best
  // individual and records the curve point.
  auto report_generation = [&](const std::function<Vec(const Vec&)>& act) {
    double sum = 0.0;
    for (int ep = 0; ep < cfg.test_episodes; ++ep) {
      Vec obs = test_env->reset(
          derive_seed(cfg.seed, stream_id("test_ep"), generation, ep));
      double ret = 0.0;
      while (true) {
        Vec a = act(normalize_state(obs_stats, obs));
        a = a.cwiseMax(env_spec.action_low).cwiseMin(env_spec.action_high);
        StepResult sr = test_env->step(a);
        ret += sr.reward;
        total_steps += 1;
        obs = sr.observation;
        if (sr.done) break;
      }
      sum += ret;
    }
    out.curve.points.push_back({total_steps, detail::wall_ms_since(start),
                                sum / cfg.test_episodes});
  };

  const int episodes_per_individual =
      cfg.algo == Algo::kNeat ? cfg.neat_fitness_episodes : cfg.fitness_episodes;

  // Fans population evaluation out to the pool; pushes collected raw
  // observations into the shared stats in individual order after the
  // barrier, so results do not depend on the worker count.
  auto evaluate_mlp_population =
      [&](const std::vector<FlatParams>& pop) -> std::vector<double> {
    std::vector<detail::EsEvalResult> results(pop.size());
    const RunningStats stats = obs_stats;  // generation snapshot
    const long long gen = generation;
    std::function<void(int, int)> task = [&](int i, int w) {
      MlpParams params = unflatten(policy_spec, pop[i]);
      results[i] = detail::evaluate_individual(
          *fit_envs[w], [&](const Vec& x) { return forward(params, x); }, stats,
          episodes_per_individual,
          derive_seed(cfg.seed, stream_id("individual"), gen, i));
    };
    pool.run_indexed(static_cast<int>(pop.size()), task);
    std::vector<double> fitness;
    fitness.reserve(pop.size());
    for (auto& r : results) {
      for (const Vec& o : r.raw_obs) obs_stats.update(o);
      total_steps += r.steps;
      fitness.push_back(r.fitness);
    }
    return fitness;
  };

  if (cfg.algo == Algo::kNes) {
    Rng init_rng = make_rng(cfg.seed, "policy_init");
    FlatParams theta = flatten(init_mlp(policy_spec, init_rng));
    Rng nes_rng = make_rng(cfg.seed, "nes");
    NesConfig nes{cfg.nes_sigma, cfg.nes_alpha, cfg.nes_population,
                  cfg.nes_mirrored};
    while (total_steps < cfg.max_env_steps) {
      NesReport report;
      theta = nes_generation(theta, nes, evaluate_mlp_population, nes_rng,
                             &report);
      MlpParams best =
          unflatten(policy_spec, report.population[report.best_index]);
      report_generation([&](const Vec& x) { return forward(best, x); });
      ++generation;
    }
    out.final_policy = theta;
  } else if (cfg.algo == Algo::kCmaes) {
    Rng init_rng = make_rng(cfg.seed, "policy_init");
    FlatParams mean0 = flatten(init_mlp(policy_spec, init_rng));
    Cmaes cmaes(mean0, cfg.cmaes_sigma0, cfg.cmaes_lambda);
    Rng ask_rng = make_rng(cfg.seed, "cmaes");
    while (total_steps < cfg.max_env_steps) {
      std::vector<FlatParams> pop = cmaes.ask(ask_rng);
      std::vector<double> fitness = evaluate_mlp_population(pop);
      int best = 0;
      for (std::size_t i = 1; i < fitness.size(); ++i)
        if (fitness[i] > fitness[best]) best = static_cast<int>(i);
      cmaes.tell(pop, fitness);
      MlpParams best_params = unflatten(policy_spec, pop[best]);
      report_generation([&](const Vec& x) { return forward(best_params, x); });
      ++generation;
    }
    out.final_policy = cmaes.mean();
  } else {  // NEAT
    neat::GenomeLayout layout{env_spec.obs_dim, env_spec.action_dim};
    neat::Population population(layout, cfg.neat, cfg.seed);
    auto eval_genomes =
        [&](const std::vector<neat::Genome>& genomes) -> std::vector<double> {
      std::vector<detail::EsEvalResult> results(genomes.size());
      const RunningStats stats = obs_stats;
      const long long gen = generation;
      std::function<void(int, int)> task = [&](int i, int w) {
        neat::Network net(genomes[i], env_spec.action_low, env_spec.action_high);
        results[i] = detail::evaluate_individual(
            *fit_envs[w], [&](const Vec& x) { return net.activate(x); }, stats,
            episodes_per_individual,
            derive_seed(cfg.seed, stream_id("individual"), gen, i));
      };
      pool.run_indexed(static_cast<int>(genomes.size()), task);
      std::vector<double> fitness;
      fitness.reserve(genomes.size());
      for (auto& r : results) {
        for (const Vec& o : r.raw_obs) obs_stats.update(o);
        total_steps += r.steps;
        fitness.push_back(r.fitness);
      }
      return fitness;
    };
    while (total_steps < cfg.max_env_steps) {
      population.evolve_generation(eval_genomes);
      neat::Network best(population.generation_best(), env_spec.action_low,
                         env_spec.action_high);
      report_generation([&](const Vec& x) { return best.activate(x); });
      ++generation;
    }
    out.best_genome = population.best_ever();
    out.has_genome = true;
  }

  out.total_env_steps = total_steps;
  for (const auto& e : fit_envs) out.recounted_env_steps += e->total_step_calls();
  out.recounted_env_steps += test_env->total_step_calls();
  out.final_obs_stats = obs_stats;
  out.wall_seconds = detail::wall_ms_since(start) / 1000.0;
  return out;
}

// Dispatch by algorithm family.
inline RunResult run_training(const HarnessConfig& cfg) {
  return is_gradient_algo(cfg.algo) ? run_parallel_rl(cfg) : run_es(cfg);
}

}  // namespace ctrlbench
