#pragma once

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ctrlbench/harness.hpp"
#include "ctrlbench/util.hpp"

namespace ctrlbench {

// Raised on malformed configuration; the CLI maps it to exit code 1.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Tuned hyperparameter defaults. Values are kept as exact strings so the
// defaults table is the single authority for what the tool ships with;
// `source` records whether the number comes from the published tuning or is
// a local choice.
struct DefaultEntry {
  std::string key;
  std::string value;
  std::string source;
};

inline const std::vector<DefaultEntry>& tuned_defaults() {
  static const std::vector<DefaultEntry> table = {
      {"ca3c.lr", "1e-4", "paper"},
      {"d3pg.lr", "1e-4", "paper"},
      {"p3o.lr", "1e-3", "paper"},
      {"p3o.eps", "0.2", "paper"},
      {"p3o.lambda", "0.97", "paper"},
      {"nes.sigma", "0.1", "paper"},
      {"nes.alpha", "0.1", "paper"},
      {"cmaes.sigma0", "1", "paper"},
      {"report.window", "50", "paper"},
      {"train.seeds", "10", "paper"},
      {"es.test_episodes", "10", "paper"},
      {"gamma", "0.99", "not from paper"},
  };
  return table;
}

inline std::string tuned_default(const std::string& key) {
  for (const auto& e : tuned_defaults())
    if (e.key == key) return e.value;
  throw std::logic_error("tuned_default: no entry for " + key);
}

struct ExperimentConfig {
  std::string algo = "p3o";
  std::string env = "pendulum";
  int hidden = 16;
  int workers = 4;
  long long max_steps = 200000;
  std::vector<int> seeds;
  std::string out = "out";
  int window = 50;
  std::string axis = "steps";
  bool seed_parallel = false;

  double lr = 1e-3;
  double gamma = 0.99;
  double lambda = 0.97;
  double eps = 0.2;
  double sigma = 0.1;
  double alpha = 0.1;
  double sigma0 = 1.0;
  int population = 50;
  int cmaes_lambda = 0;
  int segment = 512;
  int batch_size = 64;
  double tau = 0.001;
  double ou_theta = 0.15;
  double ou_sigma = 0.2;
  int warmup = 1000;
  int replay_capacity = 1000000;
  long long eval_interval = 1000;
  int test_episodes = 10;
  int fitness_episodes = 1;
  bool mirrored = true;
  bool normalize_advantages = true;
};

namespace detail {

inline long long parse_int(const std::string& key, const std::string& value,
                           long long lo, long long hi) {
  long long v = 0;
  std::size_t used = 0;
  try {
    v = std::stoll(value, &used);
  } catch (...) {
    throw ConfigError("config key '" + key + "': '" + value +
                      "' is not an integer");
  }
  if (used != value.size())
    throw ConfigError("config key '" + key + "': '" + value +
                      "' is not an integer");
  if (v < lo || v > hi)
    throw ConfigError("config key '" + key + "': " + value +
                      " out of range [" + std::to_string(lo) + ", " +
                      std::to_string(hi) + "]");
  return v;
}

inline double parse_real(const std::string& key, const std::string& value,
                         double lo, double hi) {
  double v = 0;
  std::size_t used = 0;
  try {
    v = std::stod(value, &used);
  } catch (...) {
    throw ConfigError("config key '" + key + "': '" + value +
                      "' is not a number");
  }
  if (used != value.size())
    throw ConfigError("config key '" + key + "': '" + value +
                      "' is not a number");
  if (!(v >= lo && v <= hi))
    throw ConfigError("config key '" + key + "': " + value +
                      " out of range [" + std::to_string(lo) + ", " +
                      std::to_string(hi) + "]");
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "on") return true;
  if (value == "false" || value == "0" || value == "off") return false;
  throw ConfigError("config key '" + key + "': '" + value +
                    "' is not a boolean (true/false)");
}

// "0,3,7" is an explicit list; a single integer n expands to seeds 0..n-1.
inline std::vector<int> parse_seeds(const std::string& value) {
  std::vector<int> seeds;
  if (value.find(',') == std::string::npos) {
    long long n = parse_int("seeds", value, 1, 100000);
    for (int i = 0; i < n; ++i) seeds.push_back(i);
    return seeds;
  }
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ','))
    seeds.push_back(static_cast<int>(parse_int("seeds", item, 0, 1000000000)));
  if (seeds.empty()) throw ConfigError("config key 'seeds': empty list");
  return seeds;
}

}  // namespace detail

inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "algo", "env", "hidden", "workers", "max_steps", "seeds", "out",
      "window", "axis", "seed_parallel", "lr", "gamma", "lambda", "eps",
      "sigma", "alpha", "sigma0", "population", "cmaes_lambda", "segment",
      "batch_size", "tau", "ou_theta", "ou_sigma", "warmup",
      "replay_capacity", "eval_interval", "test_episodes",
      "fitness_episodes", "mirrored", "normalize_advantages"};
  return keys;
}

inline void apply_key(ExperimentConfig& cfg, const std::string& key,
                      const std::string& value) {
  using detail::parse_bool;
  using detail::parse_int;
  using detail::parse_real;
  if (key == "algo") {
    parse_algo(value);  // throws std::invalid_argument on bad id
    cfg.algo = value;
  } else if (key == "env") {
    if (value.empty()) throw ConfigError("config key 'env': empty id");
    cfg.env = value;
  } else if (key == "hidden") {
    long long v = parse_int(key, value, 1, 4096);
    if (v != 16 && v != 64)
      throw ConfigError("config key 'hidden': " + value +
                        " not in accepted set {16, 64}");
    cfg.hidden = static_cast<int>(v);
  } else if (key == "workers") {
    cfg.workers = static_cast<int>(parse_int(key, value, 1, 1024));
  } else if (key == "max_steps") {
    cfg.max_steps = parse_int(key, value, 1, 10000000000LL);
  } else if (key == "seeds") {
    cfg.seeds = detail::parse_seeds(value);
  } else if (key == "out") {
    cfg.out = value;
  } else if (key == "window") {
    cfg.window = static_cast<int>(parse_int(key, value, 1, 1000000));
  } else if (key == "axis") {
    if (value != "steps" && value != "wall")
      throw ConfigError("config key 'axis': '" + value +
                        "' not in accepted set {steps, wall}");
    cfg.axis = value;
  } else if (key == "seed_parallel") {
    cfg.seed_parallel = parse_bool(key, value);
  } else if (key == "lr") {
    cfg.lr = parse_real(key, value, 1e-12, 10.0);
  } else if (key == "gamma") {
    cfg.gamma = parse_real(key, value, 0.0, 1.0);
  } else if (key == "lambda") {
    cfg.lambda = parse_real(key, value, 0.0, 1.0);
  } else if (key == "eps") {
    cfg.eps = parse_real(key, value, 1e-9, 10.0);
  } else if (key == "sigma") {
    cfg.sigma = parse_real(key, value, 1e-12, 100.0);
  } else if (key == "alpha") {
    cfg.alpha = parse_real(key, value, 1e-12, 100.0);
  } else if (key == "sigma0") {
    cfg.sigma0 = parse_real(key, value, 1e-12, 100.0);
  } else if (key == "population") {
    cfg.population = static_cast<int>(parse_int(key, value, 2, 100000));
  } else if (key == "cmaes_lambda") {
    cfg.cmaes_lambda = static_cast<int>(parse_int(key, value, 0, 100000));
  } else if (key == "segment") {
    cfg.segment = static_cast<int>(parse_int(key, value, 1, 1000000));
  } else if (key == "batch_size") {
    cfg.batch_size = static_cast<int>(parse_int(key, value, 1, 1000000));
  } else if (key == "tau") {
    cfg.tau = parse_real(key, value, 1e-9, 1.0);
  } else if (key == "ou_theta") {
    cfg.ou_theta = parse_real(key, value, 0.0, 2.0);
  } else if (key == "ou_sigma") {
    cfg.ou_sigma = parse_real(key, value, 0.0, 100.0);
  } else if (key == "warmup") {
    cfg.warmup = static_cast<int>(parse_int(key, value, 1, 100000000));
  } else if (key == "replay_capacity") {
    cfg.replay_capacity = static_cast<int>(parse_int(key, value, 1, 100000000));
  } else if (key == "eval_interval") {
    cfg.eval_interval = parse_int(key, value, 0, 10000000000LL);
  } else if (key == "test_episodes") {
    cfg.test_episodes = static_cast<int>(parse_int(key, value, 1, 10000));
  } else if (key == "fitness_episodes") {
    cfg.fitness_episodes = static_cast<int>(parse_int(key, value, 1, 10000));
  } else if (key == "mirrored") {
    cfg.mirrored = parse_bool(key, value);
  } else if (key == "normalize_advantages") {
    cfg.normalize_advantages = parse_bool(key, value);
  } else {
    std::string known;
    for (const auto& k : config_keys()) known += " " + k;
    throw ConfigError("unknown config key '" + key + "'; accepted keys:" +
                      known);
  }
}

// Per-algorithm defaults from the tuned-defaults table.
inline ExperimentConfig default_config(const std::string& algo) {
  ExperimentConfig cfg;
  cfg.algo = algo;
  parse_algo(algo);
  cfg.gamma = std::stod(tuned_default("gamma"));
  cfg.window = std::stoi(tuned_default("report.window"));
  cfg.test_episodes = std::stoi(tuned_default("es.test_episodes"));
  cfg.seeds.clear();
  int runs = std::stoi(tuned_default("train.seeds"));
  for (int i = 0; i < runs; ++i) cfg.seeds.push_back(i);
  if (algo == "ca3c") {
    cfg.lr = std::stod(tuned_default("ca3c.lr"));
    cfg.segment = 20;
  } else if (algo == "d3pg") {
    cfg.lr = std::stod(tuned_default("d3pg.lr"));
    cfg.segment = 1;
  } else if (algo == "p3o") {
    cfg.lr = std::stod(tuned_default("p3o.lr"));
    cfg.eps = std::stod(tuned_default("p3o.eps"));
    cfg.lambda = std::stod(tuned_default("p3o.lambda"));
    cfg.segment = 512;
  } else if (algo == "nes") {
    cfg.sigma = std::stod(tuned_default("nes.sigma"));
    cfg.alpha = std::stod(tuned_default("nes.alpha"));
    cfg.workers = 4;
  } else if (algo == "cmaes") {
    cfg.sigma0 = std::stod(tuned_default("cmaes.sigma0"));
  } else if (algo == "neat") {
    cfg.fitness_episodes = 3;
    cfg.population = 150;
  }
  return cfg;
}

using ConfigOverrides = std::vector<std::pair<std::string, std::string>>;

inline ConfigOverrides read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  ConfigOverrides pairs;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string trimmed = line;
    auto hash = trimmed.find('#');
    if (hash != std::string::npos) trimmed = trimmed.substr(0, hash);
    auto strip = [](std::string s) {
      auto b = s.find_first_not_of(" \t\r");
      auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    trimmed = strip(trimmed);
    if (trimmed.empty()) continue;
    auto eq = trimmed.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) +
                        ": expected 'key = value'");
    pairs.emplace_back(strip(trimmed.substr(0, eq)),
                       strip(trimmed.substr(eq + 1)));
  }
  return pairs;
}

// Defaults for the (possibly overridden) algorithm, then file pairs, then
// flag overrides, in that order.
inline ExperimentConfig parse_config(const std::string& file_path,
                                     const ConfigOverrides& overrides) {
  ConfigOverrides pairs;
  if (!file_path.empty()) {
    ConfigOverrides file_pairs = read_config_file(file_path);
    pairs.insert(pairs.end(), file_pairs.begin(), file_pairs.end());
  }
  pairs.insert(pairs.end(), overrides.begin(), overrides.end());

  std::string algo = "p3o";
  for (const auto& [k, v] : pairs)
    if (k == "algo") algo = v;
  try {
    parse_algo(algo);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  ExperimentConfig cfg = default_config(algo);
  for (const auto& [k, v] : pairs) {
    try {
      apply_key(cfg, k, v);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  if (cfg.seeds.empty()) throw ConfigError("config key 'seeds': empty list");
  if (cfg.warmup < cfg.batch_size && cfg.algo == "d3pg")
    throw ConfigError("config key 'warmup': must be >= batch_size for d3pg");
  return cfg;
}

namespace detail {

inline std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

// Canonical `key = value` rendering (sorted), used for manifests and their
// content hash.
inline std::string canonical_config_text(const ExperimentConfig& cfg) {
  std::map<std::string, std::string> kv;
  kv["algo"] = cfg.algo;
  kv["env"] = cfg.env;
  kv["hidden"] = std::to_string(cfg.hidden);
  kv["workers"] = std::to_string(cfg.workers);
  kv["max_steps"] = std::to_string(cfg.max_steps);
  std::string seeds;
  for (std::size_t i = 0; i < cfg.seeds.size(); ++i)
    seeds += (i ? "," : "") + std::to_string(cfg.seeds[i]);
  kv["seeds"] = seeds;
  kv["out"] = cfg.out;
  kv["window"] = std::to_string(cfg.window);
  kv["axis"] = cfg.axis;
  kv["seed_parallel"] = cfg.seed_parallel ? "true" : "false";
  kv["lr"] = detail::format_real(cfg.lr);
  kv["gamma"] = detail::format_real(cfg.gamma);
  kv["lambda"] = detail::format_real(cfg.lambda);
  kv["eps"] = detail::format_real(cfg.eps);
  kv["sigma"] = detail::format_real(cfg.sigma);
  kv["alpha"] = detail::format_real(cfg.alpha);
  kv["sigma0"] = detail::format_real(cfg.sigma0);
  kv["population"] = std::to_string(cfg.population);
  kv["cmaes_lambda"] = std::to_string(cfg.cmaes_lambda);
  kv["segment"] = std::to_string(cfg.segment);
  kv["batch_size"] = std::to_string(cfg.batch_size);
  kv["tau"] = detail::format_real(cfg.tau);
  kv["ou_theta"] = detail::format_real(cfg.ou_theta);
  kv["ou_sigma"] = detail::format_real(cfg.ou_sigma);
  kv["warmup"] = std::to_string(cfg.warmup);
  kv["replay_capacity"] = std::to_string(cfg.replay_capacity);
  kv["eval_interval"] = std::to_string(cfg.eval_interval);
  kv["test_episodes"] = std::to_string(cfg.test_episodes);
  kv["fitness_episodes"] = std::to_string(cfg.fitness_episodes);
  kv["mirrored"] = cfg.mirrored ? "true" : "false";
  kv["normalize_advantages"] = cfg.normalize_advantages ? "true" : "false";
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

inline std::string config_hash(const ExperimentConfig& cfg) {
  return git_blob_hash(canonical_config_text(cfg));
}

// Translate the experiment-level config into one seeded harness run.
inline HarnessConfig to_harness_config(const ExperimentConfig& cfg, int seed,
                                       const std::string& run_id) {
  HarnessConfig h;
  h.algo = parse_algo(cfg.algo);
  h.env_id = cfg.env;
  h.hidden = cfg.hidden;
  h.workers = cfg.workers;
  h.max_env_steps = cfg.max_steps;
  h.seed = static_cast<std::uint64_t>(seed);
  h.run_id = run_id;
  h.lr = cfg.lr;
  h.gamma = cfg.gamma;
  h.gae_lambda = cfg.lambda;
  h.clip_eps = cfg.eps;
  if (h.algo == Algo::kP3o) h.p3o_segment = cfg.segment;
  if (h.algo == Algo::kCa3c) h.ca3c_segment = cfg.segment;
  h.normalize_advantages = cfg.normalize_advantages;
  h.replay_capacity = cfg.replay_capacity;
  h.batch_size = cfg.batch_size;
  h.tau = cfg.tau;
  h.ou_theta = cfg.ou_theta;
  h.ou_sigma = cfg.ou_sigma;
  h.warmup = cfg.warmup;
  h.nes_sigma = cfg.sigma;
  h.nes_alpha = cfg.alpha;
  h.nes_population = cfg.population;
  h.nes_mirrored = cfg.mirrored;
  h.cmaes_sigma0 = cfg.sigma0;
  h.cmaes_lambda = cfg.cmaes_lambda;
  h.fitness_episodes = cfg.fitness_episodes;
  h.test_episodes = cfg.test_episodes;
  h.eval_interval = cfg.eval_interval;
  if (h.algo == Algo::kNeat) {
    h.neat.population = cfg.population;
    h.neat_fitness_episodes = cfg.fitness_episodes;
  }
  return h;
}

}  // namespace ctrlbench
