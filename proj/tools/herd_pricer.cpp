// herd-pricer <mode> --config FILE [--seed N] [--out DIR] [--check] [--set key=value]...
//
// Exit codes: 0 success, 1 other error, 2 configuration error,
// 3 stage solver failure, 4 a --check property failed.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "herd/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Learning and pricing under social learning: stage games, dynamics, deviation analysis"};
  std::string mode;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool check = false;
  std::vector<std::string> sets;
  app.add_option("mode", mode,
                 "validate-signals | solve-stage | sweep-mu | simulate | monte-carlo | farsighted-threshold | "
                 "dichotomy | stage-sweep")
      ->required();
  app.add_option("--config", config_path, "YAML configuration file");
  app.add_option("--seed", seed, "master seed (overrides the config)");
  app.add_option("--out", out, "output directory (overrides the config)");
  app.add_flag("--check", check, "exit with code 4 if a property check fails");
  app.add_option("--set", sets, "override a config key, key=value");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    herd::ExperimentConfig c = config_path.empty() ? herd::ExperimentConfig{} : herd::load_config(config_path);
    c.mode = herd::mode_from_string(mode);
    for (const auto& s : sets) herd::apply_override(c, s);
    if (seed) c.seed = *seed;
    if (!out.empty()) c.out = out;
    const auto res = herd::run(c);
    std::cout << fmt::format("{}: wrote {} files to {} (config {})\n", mode, res.manifest.files.size() + 1, c.out,
                             res.manifest.config_hash.substr(0, 12));
    for (const auto& f : res.check_failures) std::cerr << "check failed: " << f << "\n";
    if (check && !res.checks_passed()) return 4;
    return 0;
  } catch (const herd::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const herd::SolverFailure& e) {
    std::cerr << "solver failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
