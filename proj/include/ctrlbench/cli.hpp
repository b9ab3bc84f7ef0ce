#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ctrlbench/config.hpp"
#include "ctrlbench/harness.hpp"
#include "ctrlbench/report.hpp"

namespace ctrlbench {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 1;
inline constexpr int kExitRunFailure = 2;

// ---------------------------------------------------------------------------
// Checkpoints: final policy (or best genome), with the frozen observation
// statistics needed to reproduce deterministic evaluation.
// ---------------------------------------------------------------------------

struct Checkpoint {
  std::string algo;
  std::string env;
  int hidden = 16;
  RunningStats obs_stats{1};
  bool has_genome = false;
  MlpSpec policy_spec;
  FlatParams policy;
  neat::Genome genome;
};

inline void write_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out << "ctrlbench_checkpoint v1\n";
  out << "algo " << ck.algo << "\n";
  out << "env " << ck.env << "\n";
  out << "hidden " << ck.hidden << "\n";
  out << "obs_dim " << ck.obs_stats.dim() << "\n";
  out << "obs_count " << ck.obs_stats.count << "\n";
  out << "obs_mean";
  for (int i = 0; i < ck.obs_stats.dim(); ++i)
    out << " " << detail::format_g17(ck.obs_stats.mean(i));
  out << "\nobs_m2";
  for (int i = 0; i < ck.obs_stats.dim(); ++i)
    out << " " << detail::format_g17(ck.obs_stats.m2(i));
  out << "\n";
  if (ck.has_genome) {
    out << "kind genome\n";
    neat::write_genome(out, ck.genome);
  } else {
    out << "kind mlp\n";
    out << "spec " << ck.policy_spec.in_dim << " " << ck.policy_spec.hidden
        << " " << ck.policy_spec.out_dim << "\n";
    out << "params " << ck.policy.size() << "\n";
    for (Eigen::Index i = 0; i < ck.policy.size(); ++i)
      out << detail::format_g17(ck.policy(i)) << "\n";
  }
}

inline Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  auto expect = [&](const std::string& want) {
    std::string got;
    if (!(in >> got) || got != want)
      throw std::runtime_error(path + ": malformed checkpoint (expected '" +
                               want + "', got '" + got + "')");
  };
  Checkpoint ck;
  expect("ctrlbench_checkpoint");
  expect("v1");
  expect("algo");
  in >> ck.algo;
  expect("env");
  in >> ck.env;
  expect("hidden");
  in >> ck.hidden;
  expect("obs_dim");
  int dim = 0;
  in >> dim;
  ck.obs_stats = RunningStats(dim);
  expect("obs_count");
  in >> ck.obs_stats.count;
  expect("obs_mean");
  for (int i = 0; i < dim; ++i) in >> ck.obs_stats.mean(i);
  expect("obs_m2");
  for (int i = 0; i < dim; ++i) in >> ck.obs_stats.m2(i);
  expect("kind");
  std::string kind;
  in >> kind;
  if (kind == "genome") {
    ck.has_genome = true;
    ck.genome = neat::read_genome(in);
  } else if (kind == "mlp") {
    expect("spec");
    in >> ck.policy_spec.in_dim >> ck.policy_spec.hidden >>
        ck.policy_spec.out_dim;
    expect("params");
    Eigen::Index n = 0;
    in >> n;
    ck.policy.resize(n);
    for (Eigen::Index i = 0; i < n; ++i)
      if (!(in >> ck.policy(i)))
        throw std::runtime_error(path + ": truncated parameter list");
  } else {
    throw std::runtime_error(path + ": unknown checkpoint kind " + kind);
  }
  return ck;
}

// ---------------------------------------------------------------------------
// train: one run per seed; curve CSV plus checkpoint per run, then a
// manifest echoing the config with its content hash.
// ---------------------------------------------------------------------------

struct TrainOutcome {
  int exit_code = kExitOk;
  std::vector<std::string> curve_files;
  std::vector<std::string> checkpoint_files;
  std::string manifest_file;
};

inline std::string run_name(const ExperimentConfig& cfg, int seed) {
  return cfg.algo + "_" + cfg.env + "_h" + std::to_string(cfg.hidden) + "_s" +
         std::to_string(seed);
}

inline TrainOutcome cmd_train(const ExperimentConfig& cfg,
                              std::ostream& log = std::clog) {
  namespace fs = std::filesystem;
  TrainOutcome outcome;
  fs::create_directories(cfg.out);

  struct SeedResult {
    RunResult run;
    std::string error;
  };
  std::vector<SeedResult> results(cfg.seeds.size());

  auto run_one = [&](std::size_t i) {
    int seed = cfg.seeds[i];
    HarnessConfig h = to_harness_config(cfg, seed, run_name(cfg, seed));
    try {
      results[i].run = run_training(h);
      if (!results[i].run.failure.empty())
        results[i].error = results[i].run.failure;
    } catch (const std::exception& e) {
      results[i].error = e.what();
    }
  };

  if (cfg.seed_parallel) {
    std::vector<std::thread> threads;
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i)
      threads.emplace_back(run_one, i);
    for (auto& t : threads) t.join();
  } else {
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i) run_one(i);
  }

  bool any_failed = false;
  for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
    int seed = cfg.seeds[i];
    const std::string name = run_name(cfg, seed);
    const RunResult& run = results[i].run;
    std::string curve_path = (fs::path(cfg.out) / (name + ".csv")).string();
    write_curve_csv(curve_path, run.curve);
    outcome.curve_files.push_back(curve_path);
    if (!results[i].error.empty()) {
      any_failed = true;
      log << "run " << name << " failed: " << results[i].error << "\n";
      continue;
    }
    Checkpoint ck;
    ck.algo = cfg.algo;
    ck.env = cfg.env;
    ck.hidden = cfg.hidden;
    ck.obs_stats = run.final_obs_stats;
    if (run.has_genome) {
      ck.has_genome = true;
      ck.genome = run.best_genome;
    } else {
      ck.policy_spec = run.policy_spec;
      ck.policy = run.final_policy;
    }
    std::string ck_path = (fs::path(cfg.out) / (name + ".ckpt")).string();
    write_checkpoint(ck_path, ck);
    outcome.checkpoint_files.push_back(ck_path);
    log << "run " << name << ": " << run.total_env_steps << " env steps, "
        << run.curve.points.size() << " curve points, "
        << run.wall_seconds << " s\n";
  }

  std::string manifest_path = (fs::path(cfg.out) / "manifest.txt").string();
  {
    std::ofstream out(manifest_path);
    if (!out) throw std::runtime_error("cannot write manifest: " + manifest_path);
    out << "ctrlbench manifest v1\n";
    out << "config_hash " << config_hash(cfg) << "\n";
    out << "config:\n" << canonical_config_text(cfg);
    out << "curves:\n";
    for (const auto& f : outcome.curve_files)
      out << fs::path(f).filename().string() << "\n";
    out << "checkpoints:\n";
    for (const auto& f : outcome.checkpoint_files)
      out << fs::path(f).filename().string() << "\n";
  }
  outcome.manifest_file = manifest_path;
  outcome.exit_code = any_failed ? kExitRunFailure : kExitOk;
  return outcome;
}

// ---------------------------------------------------------------------------
// report: smooth, interpolate-average, aggregate CSV + SVG.
// ---------------------------------------------------------------------------

struct ReportOutcome {
  int exit_code = kExitOk;
  std::string csv_file;
  std::string svg_file;
};

inline ReportOutcome cmd_report(const std::vector<std::string>& curve_files,
                                const std::string& out_base, CurveAxis axis,
                                int window, int grid_size = 200,
                                std::ostream& log = std::clog) {
  if (curve_files.empty())
    throw ConfigError("report: need at least one curve file");
  std::vector<LearningCurve> curves;
  for (const auto& f : curve_files) curves.push_back(read_curve_csv(f));

  std::set<std::string> envs;
  for (const auto& c : curves) envs.insert(c.env);
  if (envs.size() > 1) {
    std::string list;
    for (const auto& e : envs) list += " " + e;
    throw ConfigError("report: curve files mix environments:" + list);
  }

  // group by (algo, hidden); smooth each run, then average runs per group
  std::map<std::pair<std::string, int>, std::vector<LearningCurve>> groups;
  for (const auto& c : curves)
    groups[{c.algo, c.hidden}].push_back(smooth(c, window));

  std::vector<SvgSeries> series;
  std::ostringstream csv;
  for (const auto& [key, members] : groups) {
    AggregateCurve agg = interpolate_average(members, axis, grid_size);
    SvgSeries s;
    s.label = key.first + " h" + std::to_string(key.second) + " (" +
              std::to_string(members.size()) + " runs)";
    s.hidden = key.second;
    s.aggregate = agg;
    series.push_back(std::move(s));
    csv << "# " << key.first << " h" << key.second << "\n";
    csv << aggregate_to_csv(agg);
  }

  ReportOutcome outcome;
  outcome.csv_file = out_base + ".csv";
  outcome.svg_file = out_base + ".svg";
  {
    std::ofstream out(outcome.csv_file);
    if (!out)
      throw std::runtime_error("cannot write " + outcome.csv_file);
    out << csv.str();
  }
  {
    std::ofstream out(outcome.svg_file);
    if (!out)
      throw std::runtime_error("cannot write " + outcome.svg_file);
    out << render_svg(series, axis,
                      *envs.begin() + ": average return over " +
                          std::to_string(curves.size()) + " runs");
  }
  log << "report: wrote " << outcome.csv_file << " and " << outcome.svg_file
      << "\n";
  return outcome;
}

// ---------------------------------------------------------------------------
// evaluate: load a checkpoint and run deterministic episodes.
// ---------------------------------------------------------------------------

struct EvaluateOutcome {
  int exit_code = kExitOk;
  double mean_return = 0.0;
  std::vector<double> returns;
};

inline EvaluateOutcome cmd_evaluate(const std::string& checkpoint_path,
                                    int episodes,
                                    std::ostream& out = std::cout) {
  Checkpoint ck = read_checkpoint(checkpoint_path);
  auto env = make_env(ck.env);
  const EnvSpec& spec = env->spec();

  std::function<Vec(const Vec&)> act;
  MlpParams mlp;
  std::unique_ptr<neat::Network> net;
  if (ck.has_genome) {
    net = std::make_unique<neat::Network>(ck.genome, spec.action_low,
                                          spec.action_high);
    act = [&](const Vec& x) { return net->activate(x); };
  } else {
    mlp = unflatten(ck.policy_spec, ck.policy);
    act = [&](const Vec& x) { return forward(mlp, x); };
  }

  EvaluateOutcome outcome;
  for (int ep = 0; ep < episodes; ++ep) {
    Vec obs = env->reset(derive_seed(0, stream_id("evaluate"), ep));
    double ret = 0.0;
    while (true) {
      Vec a = act(normalize_state(ck.obs_stats, obs));
      a = a.cwiseMax(spec.action_low).cwiseMin(spec.action_high);
      StepResult sr = env->step(a);
      ret += sr.reward;
      obs = sr.observation;
      if (sr.done) break;
    }
    outcome.returns.push_back(ret);
    outcome.mean_return += ret;
  }
  outcome.mean_return /= static_cast<double>(episodes);
  out << "episodes " << episodes << "\n";
  out << "mean_return " << detail::format_g17(outcome.mean_return) << "\n";
  return outcome;
}

}  // namespace ctrlbench
