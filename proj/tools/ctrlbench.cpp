#include <CLI11.hpp>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "ctrlbench/cli.hpp"

namespace {

// Options given on the command line override the config file; only flags the
// user actually passed are forwarded.
struct FlagCollector {
  ctrlbench::ConfigOverrides pairs;

  void add(CLI::App* app, const std::string& flag, const std::string& key,
           std::string* storage) {
    auto* opt = app->add_option("--" + flag, *storage);
    opt->each([this, key, storage](const std::string&) {
      pairs.emplace_back(key, *storage);
    });
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ctrlbench: parallel continuous-control learning workbench"};
  app.require_subcommand(1);

  // --- train ---
  auto* train = app.add_subcommand(
      "train", "Train one algorithm on one environment, one run per seed");
  std::string config_path;
  train->add_option("--config", config_path, "flat key = value config file");
  FlagCollector flags;
  std::vector<std::string> storage(16);
  flags.add(train, "algo", "algo", &storage[0]);
  flags.add(train, "env", "env", &storage[1]);
  flags.add(train, "hidden", "hidden", &storage[2]);
  flags.add(train, "workers", "workers", &storage[3]);
  flags.add(train, "max-steps", "max_steps", &storage[4]);
  flags.add(train, "seeds", "seeds", &storage[5]);
  flags.add(train, "out", "out", &storage[6]);
  flags.add(train, "lr", "lr", &storage[7]);
  flags.add(train, "gamma", "gamma", &storage[8]);
  flags.add(train, "eval-interval", "eval_interval", &storage[9]);
  flags.add(train, "population", "population", &storage[10]);
  flags.add(train, "segment", "segment", &storage[11]);
  flags.add(train, "seed-parallel", "seed_parallel", &storage[12]);
  flags.add(train, "window", "window", &storage[13]);
  flags.add(train, "axis", "axis", &storage[14]);

  // --- report ---
  auto* report = app.add_subcommand(
      "report", "Aggregate curve CSVs into an averaged CSV and SVG plot");
  std::vector<std::string> curve_files;
  std::string out_base = "report";
  std::string axis = "steps";
  int window = std::stoi(ctrlbench::tuned_default("report.window"));
  int grid_size = 200;
  report->add_option("files", curve_files, "curve CSV files")->required();
  report->add_option("--out", out_base, "output base path (.csv/.svg)");
  report->add_option("--axis", axis, "steps|wall")
      ->check(CLI::IsMember({"steps", "wall"}));
  report->add_option("--window", window, "smoothing window (default 50)");
  report->add_option("--grid", grid_size, "interpolation grid size");

  // --- evaluate ---
  auto* evaluate = app.add_subcommand(
      "evaluate", "Run deterministic episodes from a checkpoint");
  std::string checkpoint;
  int episodes = 10;
  evaluate->add_option("checkpoint", checkpoint, "checkpoint file")->required();
  evaluate->add_option("--episodes", episodes, "number of episodes");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : ctrlbench::kExitConfigError;
  }

  try {
    if (train->parsed()) {
      ctrlbench::ExperimentConfig cfg =
          ctrlbench::parse_config(config_path, flags.pairs);
      return ctrlbench::cmd_train(cfg).exit_code;
    }
    if (report->parsed()) {
      ctrlbench::CurveAxis a = axis == "wall"
                                   ? ctrlbench::CurveAxis::kWallMs
                                   : ctrlbench::CurveAxis::kEnvSteps;
      return ctrlbench::cmd_report(curve_files, out_base, a, window, grid_size)
          .exit_code;
    }
    if (evaluate->parsed())
      return ctrlbench::cmd_evaluate(checkpoint, episodes).exit_code;
  } catch (const ctrlbench::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return ctrlbench::kExitConfigError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return ctrlbench::kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "run failure: " << e.what() << "\n";
    return ctrlbench::kExitRunFailure;
  }
  return ctrlbench::kExitOk;
}
