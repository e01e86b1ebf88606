#pragma once

// Declarative experiment runs: config parsing, dispatch to the model
// modules, output files and run manifests.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "herd/dynamics.hpp"
#include "herd/farsighted.hpp"
#include "herd/signals.hpp"
#include "herd/stage_game.hpp"

namespace herd {

inline constexpr const char* kArtifactVersion = "1.0.0";

enum class Mode {
  ValidateSignals,
  SolveStage,
  SweepMu,
  Simulate,
  MonteCarlo,
  FarsightedThreshold,
  // Presets built on the modes above.
  Dichotomy,
  StageSweep,
};
const char* to_string(Mode m);
Mode mode_from_string(const std::string& s);

/// Flat key/value configuration. See configs/ for the documented schema.
struct ExperimentConfig {
  Mode mode = Mode::SolveStage;

  Family family = Family::UniformBelief;
  double lo = 0.3;
  double hi = 0.7;
  double kappa = 1.0;
  std::size_t knots = 4096;
  std::string density_table;  // Custom only

  double mu0 = 0.5;
  std::vector<double> mu;  // solve-stage points; sweep-mu uses the range below when empty
  double mu_from = 0.05;
  double mu_to = 0.95;
  double mu_step = 0.05;

  std::size_t runs = 1000;
  std::size_t t_max = 10000;
  double eps_learn = 1e-3;
  std::string state = "random";  // random | 0 | 1
  std::size_t herd_tail = 10;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 0;
  // Trajectory CSV holds the first csv_runs runs; 0 means all.
  std::size_t csv_runs = 0;

  std::size_t grid = 201;
  double regret_tol = 1e-4;
  double deterrence_tol = 1e-6;
  std::size_t fp_iterations = 20000;
  double bucket = 1e-3;
  double threshold_tol = 1e-4;

  double delta = 0.5;

  std::vector<Family> families{Family::Tent, Family::UniformBelief, Family::BetaUnbounded};
  std::string out = "runs/out";

  bool operator==(const ExperimentConfig&) const = default;
};

/// Parses YAML text. Unknown keys, wrong types and invalid values raise
/// ConfigError naming the key and line.
ExperimentConfig parse_config(const std::string& text, const std::string& source = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);
/// Canonical YAML; parse_config(emit_config(c)) == c.
std::string emit_config(const ExperimentConfig& c);
/// Applies "key=value" with the value read as a YAML scalar or flow list.
void apply_override(ExperimentConfig& c, const std::string& assignment);
/// Checks cross-field constraints; throws ConfigError.
void validate_config(const ExperimentConfig& c);

SignalStructure make_structure(const ExperimentConfig& c);
SolverOptions solver_options(const ExperimentConfig& c);

std::string sha256_hex(const std::string& bytes);
/// SHA-256 of the canonical config with the output directory left out.
std::string config_hash(const ExperimentConfig& c);

struct RunManifest {
  std::string config_hash;
  std::string artifact_version;
  std::string mode;
  std::optional<std::uint64_t> seed;
  double wall_clock_seconds = 0.0;
  std::vector<std::pair<std::string, std::string>> files;  // relative path, sha256
};

struct RunResult {
  RunManifest manifest;
  std::vector<std::string> check_failures;
  bool checks_passed() const { return check_failures.empty(); }
};

/// Runs the configured mode and writes outputs plus manifest.json under
/// c.out. Every file is written to a temporary name and renamed into place.
RunResult run(const ExperimentConfig& c);

/// Writes `bytes` to `path` via a temporary file and rename.
void write_atomic(const std::filesystem::path& path, const std::string& bytes);

/// JSON rendering of a batch summary; identical summaries give identical text.
std::string summary_json(const MonteCarloSummary& s, std::size_t t_max);

}  // namespace herd
