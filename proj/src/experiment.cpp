#include "herd/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>
#include <openssl/evp.h>
#include <yaml-cpp/yaml.h>

namespace herd {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Modes

const char* to_string(Mode m) {
  switch (m) {
    case Mode::ValidateSignals: return "validate-signals";
    case Mode::SolveStage: return "solve-stage";
    case Mode::SweepMu: return "sweep-mu";
    case Mode::Simulate: return "simulate";
    case Mode::MonteCarlo: return "monte-carlo";
    case Mode::FarsightedThreshold: return "farsighted-threshold";
    case Mode::Dichotomy: return "dichotomy";
    case Mode::StageSweep: return "stage-sweep";
  }
  return "?";
}

Mode mode_from_string(const std::string& s) {
  for (Mode m : {Mode::ValidateSignals, Mode::SolveStage, Mode::SweepMu, Mode::Simulate, Mode::MonteCarlo,
                 Mode::FarsightedThreshold, Mode::Dichotomy, Mode::StageSweep}) {
    if (s == to_string(m)) return m;
  }
  throw ConfigError("unknown mode '" + s + "'");
}

// ---------------------------------------------------------------------------
// Config parsing

namespace {

struct FieldError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

double as_double(const YAML::Node& n) {
  if (!n.IsScalar()) throw FieldError("expected a number");
  try {
    return n.as<double>();
  } catch (const YAML::Exception&) {
    throw FieldError("expected a number, got '" + n.Scalar() + "'");
  }
}

std::size_t as_count(const YAML::Node& n) {
  if (!n.IsScalar()) throw FieldError("expected a non-negative integer");
  try {
    const auto v = n.as<long long>();
    if (v < 0) throw FieldError("expected a non-negative integer");
    return static_cast<std::size_t>(v);
  } catch (const YAML::Exception&) {
    throw FieldError("expected a non-negative integer, got '" + n.Scalar() + "'");
  }
}

std::string as_string(const YAML::Node& n) {
  if (!n.IsScalar()) throw FieldError("expected a string");
  return n.Scalar();
}

std::vector<double> as_double_list(const YAML::Node& n) {
  if (n.IsScalar()) return {as_double(n)};
  if (!n.IsSequence()) throw FieldError("expected a list of numbers");
  std::vector<double> out;
  for (const auto& x : n) out.push_back(as_double(x));
  return out;
}

Family as_family(const YAML::Node& n) {
  try {
    return family_from_string(as_string(n));
  } catch (const DomainError& e) {
    throw FieldError(e.what());
  }
}

using Setter = std::function<void(ExperimentConfig&, const YAML::Node&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"mode", [](auto& c, const auto& n) {
         try {
           c.mode = mode_from_string(as_string(n));
         } catch (const ConfigError& e) {
           throw FieldError(e.what());
         }
       }},
      {"family", [](auto& c, const auto& n) { c.family = as_family(n); }},
      {"lo", [](auto& c, const auto& n) { c.lo = as_double(n); }},
      {"hi", [](auto& c, const auto& n) { c.hi = as_double(n); }},
      {"kappa", [](auto& c, const auto& n) { c.kappa = as_double(n); }},
      {"knots", [](auto& c, const auto& n) { c.knots = as_count(n); }},
      {"density_table", [](auto& c, const auto& n) { c.density_table = as_string(n); }},
      {"mu0", [](auto& c, const auto& n) { c.mu0 = as_double(n); }},
      {"mu", [](auto& c, const auto& n) { c.mu = as_double_list(n); }},
      {"mu_from", [](auto& c, const auto& n) { c.mu_from = as_double(n); }},
      {"mu_to", [](auto& c, const auto& n) { c.mu_to = as_double(n); }},
      {"mu_step", [](auto& c, const auto& n) { c.mu_step = as_double(n); }},
      {"runs", [](auto& c, const auto& n) { c.runs = as_count(n); }},
      {"t_max", [](auto& c, const auto& n) { c.t_max = as_count(n); }},
      {"eps_learn", [](auto& c, const auto& n) { c.eps_learn = as_double(n); }},
      {"state", [](auto& c, const auto& n) { c.state = as_string(n); }},
      {"herd_tail", [](auto& c, const auto& n) { c.herd_tail = as_count(n); }},
      {"seed", [](auto& c, const auto& n) { c.seed = static_cast<std::uint64_t>(as_count(n)); }},
      {"threads", [](auto& c, const auto& n) { c.threads = as_count(n); }},
      {"csv_runs", [](auto& c, const auto& n) { c.csv_runs = as_count(n); }},
      {"grid", [](auto& c, const auto& n) { c.grid = as_count(n); }},
      {"regret_tol", [](auto& c, const auto& n) { c.regret_tol = as_double(n); }},
      {"deterrence_tol", [](auto& c, const auto& n) { c.deterrence_tol = as_double(n); }},
      {"fp_iterations", [](auto& c, const auto& n) { c.fp_iterations = as_count(n); }},
      {"bucket", [](auto& c, const auto& n) { c.bucket = as_double(n); }},
      {"threshold_tol", [](auto& c, const auto& n) { c.threshold_tol = as_double(n); }},
      {"delta", [](auto& c, const auto& n) { c.delta = as_double(n); }},
      {"families", [](auto& c, const auto& n) {
         c.families.clear();
         if (n.IsScalar()) {
           c.families.push_back(as_family(n));
           return;
         }
         if (!n.IsSequence()) throw FieldError("expected a list of family names");
         for (const auto& x : n) c.families.push_back(as_family(x));
       }},
      {"out", [](auto& c, const auto& n) { c.out = as_string(n); }},
  };
  return table;
}

void set_field(ExperimentConfig& c, const std::string& key, const YAML::Node& value, const std::string& where) {
  const auto& table = setters();
  auto it = table.find(key);
  if (it == table.end()) throw ConfigError(fmt::format("{}: unknown key '{}'", where, key));
  try {
    it->second(c, value);
  } catch (const FieldError& e) {
    throw ConfigError(fmt::format("{}: key '{}': {}", where, key, e.what()));
  }
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"' || ch == '\\') out.push_back('\\');
    out.push_back(ch);
  }
  return out + "\"";
}

std::string num(double x) { return fmt::format("{}", x); }

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::string& source) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(fmt::format("{}:{}: {}", source, e.mark.line + 1, e.msg));
  }
  ExperimentConfig c;
  if (root.IsNull()) return c;
  if (!root.IsMap()) throw ConfigError(source + ": top level must be a key/value map");
  for (const auto& kv : root) {
    const std::string key = kv.first.Scalar();
    set_field(c, key, kv.second, fmt::format("{}:{}", source, kv.first.Mark().line + 1));
  }
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

std::string emit_config(const ExperimentConfig& c) {
  std::string o;
  auto line = [&](const std::string& k, const std::string& v) { o += k + ": " + v + "\n"; };
  auto list = [](const auto& xs, auto f) {
    std::string s = "[";
    for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? ", " : "") + f(xs[i]);
    return s + "]";
  };
  line("mode", to_string(c.mode));
  line("family", to_string(c.family));
  line("lo", num(c.lo));
  line("hi", num(c.hi));
  line("kappa", num(c.kappa));
  line("knots", std::to_string(c.knots));
  line("density_table", quote(c.density_table));
  line("mu0", num(c.mu0));
  line("mu", list(c.mu, num));
  line("mu_from", num(c.mu_from));
  line("mu_to", num(c.mu_to));
  line("mu_step", num(c.mu_step));
  line("runs", std::to_string(c.runs));
  line("t_max", std::to_string(c.t_max));
  line("eps_learn", num(c.eps_learn));
  line("state", quote(c.state));
  line("herd_tail", std::to_string(c.herd_tail));
  if (c.seed) line("seed", std::to_string(*c.seed));
  line("threads", std::to_string(c.threads));
  line("csv_runs", std::to_string(c.csv_runs));
  line("grid", std::to_string(c.grid));
  line("regret_tol", num(c.regret_tol));
  line("deterrence_tol", num(c.deterrence_tol));
  line("fp_iterations", std::to_string(c.fp_iterations));
  line("bucket", num(c.bucket));
  line("threshold_tol", num(c.threshold_tol));
  line("delta", num(c.delta));
  line("families", list(c.families, [](Family f) { return std::string(to_string(f)); }));
  line("out", quote(c.out));
  return o;
}

void apply_override(ExperimentConfig& c, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  YAML::Node value;
  try {
    value = YAML::Load(assignment.substr(eq + 1));
  } catch (const YAML::ParserException& e) {
    throw ConfigError(fmt::format("override '{}': {}", assignment, e.msg));
  }
  set_field(c, key, value, "override");
}

void validate_config(const ExperimentConfig& c) {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  auto positive = [&](double x, const char* name) {
    if (!(x > 0.0)) fail(fmt::format("{} must be positive (got {})", name, x));
  };
  positive(c.regret_tol, "regret_tol");
  positive(c.deterrence_tol, "deterrence_tol");
  positive(c.threshold_tol, "threshold_tol");
  positive(c.eps_learn, "eps_learn");
  positive(c.bucket, "bucket");
  if (c.eps_learn >= 0.5) fail("eps_learn must be below 0.5");
  if (c.bucket >= 0.5) fail("bucket must be below 0.5");
  if (c.grid < 2) fail("grid must have at least 2 points");
  if (c.knots < 2) fail("knots must be at least 2");
  if (!(c.delta >= 0.0 && c.delta < 1.0)) fail("delta must lie in [0, 1)");
  if (c.state != "random" && c.state != "0" && c.state != "1") fail("state must be random, 0 or 1");
  if (c.family == Family::Custom && c.density_table.empty()) fail("family Custom needs density_table");
  for (double m : c.mu) {
    if (!(m > 0.0 && m < 1.0)) fail(fmt::format("mu value {} outside (0, 1)", m));
  }
  const bool sweep = c.mode == Mode::SweepMu || c.mode == Mode::StageSweep;
  if (sweep && c.mu.empty()) {
    if (!(c.mu_step > 0.0)) fail("mu_step must be positive");
    if (!(c.mu_from > 0.0 && c.mu_to < 1.0 && c.mu_from <= c.mu_to)) fail("mu_from/mu_to must satisfy 0 < from <= to < 1");
  }
  const bool sim = c.mode == Mode::Simulate || c.mode == Mode::MonteCarlo || c.mode == Mode::Dichotomy;
  if (sim) {
    if (!c.seed) fail(fmt::format("mode {} requires a seed", to_string(c.mode)));
    if (c.runs == 0) fail("runs must be at least 1");
    if (c.t_max == 0) fail("t_max must be at least 1");
    if (!(c.mu0 > c.eps_learn && c.mu0 < 1.0 - c.eps_learn)) fail("mu0 must lie in (eps_learn, 1 - eps_learn)");
  }
  if ((c.mode == Mode::Dichotomy || c.mode == Mode::StageSweep) && c.families.empty()) {
    fail("families must not be empty");
  }
}

SignalStructure make_structure(const ExperimentConfig& c) {
  FamilyParams p;
  p.lo = c.lo;
  p.hi = c.hi;
  p.kappa = c.kappa;
  p.knots = c.knots;
  try {
    if (c.family == Family::Custom) p.table = read_density_table(c.density_table);
    return SignalStructure::make(c.family, p);
  } catch (const DomainError& e) {
    throw ConfigError(fmt::format("signal family {}: {}", to_string(c.family), e.what()));
  }
}

SolverOptions solver_options(const ExperimentConfig& c) {
  SolverOptions o;
  o.grid = c.grid;
  o.regret_tol = c.regret_tol;
  o.deterrence_tol = c.deterrence_tol;
  o.fp_iterations = c.fp_iterations;
  return o;
}

// ---------------------------------------------------------------------------
// Output helpers

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 digest failed");
  }
  std::string out;
  for (unsigned int i = 0; i < len; ++i) out += fmt::format("{:02x}", md[i]);
  return out;
}

void write_atomic(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw Error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string config_hash(const ExperimentConfig& c) {
  ExperimentConfig k = c;
  k.out.clear();
  return sha256_hex(emit_config(k));
}

namespace {

bool learns(const SignalStructure& s) {
  const auto k = classify(s).kind;
  return k == SignalKind::Unbounded || k == SignalKind::BoundedVanishing;
}

json strategy_json(const MixedStrategy& m) {
  json support = json::array();
  for (std::size_t i = 0; i < m.grid.size(); ++i) {
    if (m.weights[i] > 1e-12) support.push_back({{"price", m.grid[i]}, {"weight", m.weights[i]}});
  }
  return {{"grid_lo", m.grid.front()},
          {"grid_hi", m.grid.back()},
          {"grid_points", m.grid.size()},
          {"mean", m.mean()},
          {"support", support}};
}

json equilibrium_json(const StageEquilibrium& eq, const RegretCertificate& cert) {
  return {{"mu", eq.mu},
          {"classification", to_string(eq.classification)},
          {"phase", to_string(eq.phase)},
          {"payoffs", {eq.payoff.firm0, eq.payoff.firm1}},
          {"sale_prob0", eq.sale_prob0},
          {"sale_prob1", eq.sale_prob1},
          {"exit_prob", eq.exit_prob},
          {"regret", {{"solver", {eq.regret0, eq.regret1}}, {"certificate", {cert.firm0, cert.firm1}}}},
          {"phi0", strategy_json(eq.phi0)},
          {"phi1", strategy_json(eq.phi1)}};
}

// Checks shared by solve-stage and the sweeps: regret certificate and the
// deterrence-price identity.
void check_equilibrium(const StageEquilibrium& eq, const RegretCertificate& cert, const SignalStructure& s,
                       double tol, std::vector<std::string>& failures) {
  if (cert.max() > tol + 1e-12) {
    failures.push_back(fmt::format("mu={}: regret certificate {} exceeds {}", eq.mu, cert.max(), tol));
  }
  if (eq.classification == Classification::DeterrenceBy0) {
    const double h = deterrence_price_curve(eq.mu, s);
    if (std::abs(eq.payoff.firm0 - h) > eq.grid_step0()) {
      failures.push_back(fmt::format("mu={}: deterrence payoff {} differs from {}", eq.mu, eq.payoff.firm0, h));
    }
  } else if (eq.classification == Classification::DeterrenceBy1) {
    const double h = deterrence_price_curve_firm1(eq.mu, s);
    if (std::abs(eq.payoff.firm1 - h) > eq.grid_step1()) {
      failures.push_back(fmt::format("mu={}: deterrence payoff {} differs from {}", eq.mu, eq.payoff.firm1, h));
    }
  }
}

std::vector<double> sweep_points(const ExperimentConfig& c) {
  if (!c.mu.empty()) return c.mu;
  std::vector<double> out;
  const auto n = static_cast<std::size_t>(std::floor((c.mu_to - c.mu_from) / c.mu_step + 1e-9));
  for (std::size_t k = 0; k <= n; ++k) {
    // Rounded so 0.05 + 2 * 0.05 prints as 0.15.
    out.push_back(std::round((c.mu_from + static_cast<double>(k) * c.mu_step) * 1e12) / 1e12);
  }
  return out;
}

std::optional<State> state_option(const ExperimentConfig& c) {
  if (c.state == "0") return State::Zero;
  if (c.state == "1") return State::One;
  return std::nullopt;
}

SimulationOptions sim_options(const ExperimentConfig& c) {
  SimulationOptions o;
  o.mu0 = c.mu0;
  o.state = state_option(c);
  o.t_max = c.t_max;
  o.eps_learn = c.eps_learn;
  o.seed = c.seed.value_or(0);
  o.herd_tail = c.herd_tail;
  return o;
}

struct Outputs {
  std::vector<std::pair<std::string, std::string>> files;
  std::vector<std::string> failures;
  void add(std::string name, std::string bytes) { files.emplace_back(std::move(name), std::move(bytes)); }
};

std::string dump(const json& j) { return j.dump(2) + "\n"; }

// --- validate-signals ------------------------------------------------------

void run_validate(const ExperimentConfig& c, Outputs& out) {
  const auto s = make_structure(c);
  const auto rep = validate(s);
  const auto cls = classify(s);
  json checks = json::array();
  for (const auto& ch : rep.checks) {
    checks.push_back({{"name", ch.name}, {"residual", ch.residual}, {"passed", ch.passed}});
    if (!ch.passed) out.failures.push_back(fmt::format("check {} failed (residual {})", ch.name, ch.residual));
  }
  if (cls.unstable) out.failures.push_back("endpoint limit estimate did not settle: " + cls.note);
  json j = {{"family", to_string(c.family)},
            {"structure", s.describe()},
            {"support", {s.support_lo(), s.support_hi()}},
            {"passed", rep.passed()},
            {"checks", checks},
            {"classification",
             {{"kind", to_string(cls.kind)},
              {"endpoint_densities",
               {{"g0_lo", cls.g0_lo}, {"g1_lo", cls.g1_lo}, {"g0_hi", cls.g0_hi}, {"g1_hi", cls.g1_hi}}},
              {"unstable", cls.unstable},
              {"note", cls.note}}}};
  out.add("summary.json", dump(j));
}

// --- solve-stage -------------------------------------------------------------

void run_solve(const ExperimentConfig& c, Outputs& out) {
  const auto s = make_structure(c);
  const auto opt = solver_options(c);
  const std::vector<double> mus = c.mu.empty() ? std::vector<double>{c.mu0} : c.mu;
  json records = json::array();
  std::string csv = "mu,firm,price,weight\n";
  for (double mu : mus) {
    const auto eq = solve_stage(mu, s, opt);
    const auto cert = regret_certificate(eq, s);
    check_equilibrium(eq, cert, s, c.regret_tol, out.failures);
    records.push_back(equilibrium_json(eq, cert));
    for (int f = 0; f < 2; ++f) {
      const auto& m = f == 0 ? eq.phi0 : eq.phi1;
      for (std::size_t i = 0; i < m.grid.size(); ++i) {
        if (m.weights[i] > 1e-12) csv += fmt::format("{},{},{},{}\n", mu, f, m.grid[i], m.weights[i]);
      }
    }
  }
  out.add("equilibria.csv", csv);
  out.add("summary.json", dump({{"family", to_string(c.family)}, {"grid", c.grid}, {"equilibria", records}}));
}

// --- sweeps ------------------------------------------------------------------

std::string sweep_header() {
  return "family,mu,classification,phase,sale0,sale1,exit,payoff0,payoff1,mean_price0,mean_price1,regret\n";
}

json sweep_family(const ExperimentConfig& c, Family f, std::string& csv, Outputs& out) {
  ExperimentConfig fc = c;
  fc.family = f;
  const auto s = make_structure(fc);
  const auto opt = solver_options(fc);
  std::map<std::string, int> counts;
  std::vector<std::pair<double, Classification>> seen;
  for (double mu : sweep_points(fc)) {
    const auto eq = solve_stage(mu, s, opt);
    const auto cert = regret_certificate(eq, s);
    check_equilibrium(eq, cert, s, c.regret_tol, out.failures);
    ++counts[to_string(eq.classification)];
    seen.emplace_back(mu, eq.classification);
    csv += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{}\n", to_string(f), mu, to_string(eq.classification),
                       to_string(eq.phase), eq.sale_prob0, eq.sale_prob1, eq.exit_prob, eq.payoff.firm0,
                       eq.payoff.firm1, eq.phi0.mean(), eq.phi1.mean(), cert.max());
  }
  const auto cls = classify(s);
  json j = {{"kind", to_string(cls.kind)}, {"points", seen.size()}, {"counts", counts}};
  if (learns(s)) {
    for (const auto& [mu, k] : seen) {
      if (k != Classification::NonDeterrence) {
        out.failures.push_back(fmt::format("{}: deterrence at mu={} for a learning structure", to_string(f), mu));
      }
    }
  } else if (c.mode == Mode::StageSweep) {
    const auto hi = find_threshold_mu(s, ThresholdSide::High, opt, c.threshold_tol);
    const auto lo = find_threshold_mu(s, ThresholdSide::Low, opt, c.threshold_tol);
    j["mu_bar_high"] = hi.mu_bar;
    j["mu_bar_low"] = lo.mu_bar;
    for (const auto& [mu, k] : seen) {
      const Classification want = mu > hi.bracket_hi   ? Classification::DeterrenceBy0
                                  : mu < lo.bracket_lo ? Classification::DeterrenceBy1
                                                       : Classification::NonDeterrence;
      const bool inside = (mu >= hi.bracket_lo && mu <= hi.bracket_hi) || (mu >= lo.bracket_lo && mu <= lo.bracket_hi);
      if (!inside && k != want) {
        out.failures.push_back(fmt::format("{}: classification {} at mu={} disagrees with thresholds",
                                           to_string(f), to_string(k), mu));
      }
    }
  }
  return j;
}

void run_sweep(const ExperimentConfig& c, Outputs& out) {
  std::string csv = sweep_header();
  json j = {{"grid", c.grid}};
  j["families"][to_string(c.family)] = sweep_family(c, c.family, csv, out);
  out.add("sweep.csv", csv);
  out.add("summary.json", dump(j));
}

void run_stage_sweep(const ExperimentConfig& c, Outputs& out) {
  std::string csv = sweep_header();
  json j = {{"grid", c.grid}};
  for (Family f : c.families) j["families"][to_string(f)] = sweep_family(c, f, csv, out);
  out.add("stage_sweep.csv", csv);
  out.add("summary.json", dump(j));
}

// --- simulate / monte-carlo -------------------------------------------------

std::string trajectories_csv(const std::vector<TrajectoryRecord>& records, std::size_t limit) {
  std::ostringstream os;
  if (limit == 0 || limit >= records.size()) {
    write_trajectories_csv(os, records);
  } else {
    write_trajectories_csv(os, {records.begin(), records.begin() + static_cast<std::ptrdiff_t>(limit)});
  }
  return os.str();
}

void check_batch(const MonteCarloSummary& sum, const SignalStructure& s, const std::string& label,
                 std::vector<std::string>& failures) {
  // Reaching the wrong edge of the learning band has small positive
  // probability; flag counts beyond what the martingale bound allows.
  const auto allowed = poisson_quantile(sum.wrong_vertex_bound, 0.999);
  if (sum.learned_wrong > allowed) {
    failures.push_back(fmt::format("{}: {} runs learned the wrong state (bound allows {})", label, sum.learned_wrong,
                                   allowed));
  }
  if (!sum.martingale.passed()) failures.push_back(label + ": martingale test failed");
  if (learns(s) && sum.deterrence_terminations > 0) {
    failures.push_back(fmt::format("{}: {} deterrence stops for a learning structure", label, sum.deterrence_terminations));
  }
}

void run_simulate(const ExperimentConfig& c, Outputs& out) {
  const auto s = make_structure(c);
  StageCache cache(s, solver_options(c), c.bucket);
  const auto tr = simulate(s, sim_options(c), 0, cache);
  // Replaying the actions must reproduce the beliefs.
  for (const auto& st : tr.steps) {
    const auto reg = market_regime(st.tau);
    if (update_after_action(st.mu, st.cuts, reg, st.action, s) != st.mu_next) {
      out.failures.push_back(fmt::format("belief replay mismatch at t={}", st.t));
      break;
    }
  }
  if (tr.outcome == Outcome::LearnedWrong) out.failures.push_back("trajectory learned the wrong state");
  json j = {{"family", to_string(c.family)},
            {"seed", *c.seed},
            {"config_hash", config_hash(c)},
            {"state", to_string(tr.state)},
            {"outcome", to_string(tr.outcome)},
            {"stop", to_string(tr.stop)},
            {"terminal_mu", tr.terminal_mu},
            {"steps", tr.steps.size()},
            {"deterrence_onset", tr.deterrence_onset ? json(*tr.deterrence_onset) : json(nullptr)},
            {"hitting_time", tr.hitting_time ? json(*tr.hitting_time) : json(nullptr)}};
  out.add("trajectories.csv", trajectories_csv({tr}, 0));
  out.add("summary.json", dump(j));
}

std::string correctness_csv(const MonteCarloSummary& sum) {
  std::string csv = "t,state0,state1\n";
  const auto& a = sum.by_state[0].purchase_correct;
  const auto& b = sum.by_state[1].purchase_correct;
  for (std::size_t t = 0; t < a.size(); ++t) csv += fmt::format("{},{},{}\n", t, a[t], b[t]);
  return csv;
}

json batch_json(const ExperimentConfig& c, const MonteCarloResult& res, const std::string& hash) {
  json errors = json::array();
  for (const auto& e : res.errors) errors.push_back({{"run", e.run}, {"message", e.message}});
  json j = {{"family", to_string(c.family)},
            {"seed", *c.seed},
            {"config_hash", hash},
            {"mu0", c.mu0},
            {"t_max", c.t_max},
            {"eps_learn", c.eps_learn},
            {"csv_runs", c.csv_runs == 0 ? res.records.size() : std::min(c.csv_runs, res.records.size())},
            {"run_errors", errors}};
  j["summary"] = json::parse(summary_json(res.summary, c.t_max));
  return j;
}

void run_monte_carlo(const ExperimentConfig& c, Outputs& out, const std::string& prefix) {
  const auto s = make_structure(c);
  StageCache cache(s, solver_options(c), c.bucket);
  MonteCarloOptions mo;
  mo.sim = sim_options(c);
  mo.runs = c.runs;
  mo.threads = c.threads;
  const auto res = monte_carlo(s, mo, cache);
  check_batch(res.summary, s, to_string(c.family), out.failures);
  out.add(prefix + "trajectories.csv", trajectories_csv(res.records, c.csv_runs));
  out.add(prefix + "purchase_correct.csv", correctness_csv(res.summary));
  out.add(prefix + "summary.json", dump(batch_json(c, res, config_hash(c))));
}

void run_dichotomy(const ExperimentConfig& c, Outputs& out) {
  std::string table =
      "family,kind,runs,learned_correct_freq0,learned_correct_freq1,herd_freq,herd_on_inferior_freq,learned_wrong,"
      "deterrence_terminations,undecided,purchase_correct_end0,purchase_correct_end1\n";
  json j = json::object();
  for (Family f : c.families) {
    ExperimentConfig fc = c;
    fc.family = f;
    fc.mode = Mode::MonteCarlo;
    const std::string prefix = std::string(to_string(f)) + "/";
    run_monte_carlo(fc, out, prefix);
    const auto sj = json::parse(out.files.back().second);
    const auto& sm = sj["summary"];
    const auto kind = to_string(classify(make_structure(fc)).kind);
    table += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{}\n", to_string(f), kind, sm["runs"].get<std::size_t>(),
                         sm["by_state"]["0"]["learned_correct_freq"].get<double>(),
                         sm["by_state"]["1"]["learned_correct_freq"].get<double>(), sm["herd_freq"].get<double>(),
                         sm["herd_on_inferior_freq"].get<double>(), sm["learned_wrong"].get<std::size_t>(),
                         sm["deterrence_terminations"].get<std::size_t>(),
                         sm["by_state"]["0"]["undecided"].get<std::size_t>() +
                             sm["by_state"]["1"]["undecided"].get<std::size_t>(),
                         sm["by_state"]["0"]["purchase_correct_end"].get<double>(),
                         sm["by_state"]["1"]["purchase_correct_end"].get<double>());
    j[to_string(f)] = {{"kind", kind}, {"summary", prefix + "summary.json"}};
    if (std::string(kind) == to_string(SignalKind::BoundedNonVanishing) &&
        !(sm["herd_freq"].get<double>() > 0.0 && sm["herd_on_inferior_freq"].get<double>() > 0.0)) {
      out.failures.push_back(std::string(to_string(f)) + ": expected herds, including on the inferior firm");
    }
  }
  out.add("comparison.csv", table);
  out.add("summary.json", dump({{"families", j}}));
}

// --- farsighted-threshold ---------------------------------------------------

void run_farsighted(const ExperimentConfig& c, Outputs& out) {
  const auto s = make_structure(c);
  FarsightedConfig fc;
  fc.delta = c.delta;
  fc.grid = c.grid;
  const auto r = find_mu_prime(s, fc, c.threshold_tol);
  std::string csv = "mu,max_gain,argmax_tau,slope_at_h,sustained\n";
  const double from = std::max(0.5, 1.0 - s.support_lo());
  const double to = 1.0 - 1e-3;
  for (int k = 0; k <= 100; ++k) {
    const double mu = from + (to - from) * k / 100.0;
    const auto sc = scan_deviations(mu, s, fc);
    csv += fmt::format("{},{},{},{},{}\n", mu, sc.max_gain, sc.argmax_tau, sc.slope_at_h, sc.sustained ? 1 : 0);
  }
  const auto at = scan_deviations(r.mu_prime, s, fc);
  json j = {{"family", to_string(c.family)},
            {"delta", c.delta},
            {"mu_prime", r.mu_prime},
            {"bracket", {r.bracket_lo, r.bracket_hi}},
            {"scans", r.scans},
            {"grid", c.grid},
            {"checked_above", r.checked},
            {"at_mu_prime", {{"max_gain", at.max_gain}, {"argmax_tau", at.argmax_tau}, {"slope_at_h", at.slope_at_h}}}};
  out.add("deviation_scan.csv", csv);
  out.add("summary.json", dump(j));
}

}  // namespace

std::string summary_json(const MonteCarloSummary& s, std::size_t t_max) {
  auto state_json = [&](const StateSummary& st) {
    json checkpoints = json::array();
    for (std::size_t t = 0; t < st.purchase_correct.size();) {
      checkpoints.push_back({t, st.purchase_correct[t]});
      const std::size_t next = t < 10 ? t + 1 : t + t / 2;
      t = (t + 1 < st.purchase_correct.size() && next >= st.purchase_correct.size()) ? st.purchase_correct.size() - 1
                                                                                        : next;
      if (t == st.purchase_correct.size() - 1) {
        checkpoints.push_back({t, st.purchase_correct[t]});
        break;
      }
    }
    return json{{"runs", st.runs},
                {"learned_correct", st.learned_correct},
                {"learned_wrong", st.learned_wrong},
                {"herd_on_firm0", st.herd0},
                {"herd_on_firm1", st.herd1},
                {"undecided", st.undecided},
                {"herd_on_inferior", st.herd_on_inferior},
                {"learned_correct_freq", st.learned_correct_freq},
                {"herd_freq", st.herd_freq},
                {"purchase_correct_end", st.purchase_correct.empty() ? 0.0 : st.purchase_correct.back()},
                {"purchase_correct", checkpoints}};
  };
  json buckets = json::array();
  for (const auto& b : s.martingale.buckets) {
    buckets.push_back({{"lo", b.lo},
                       {"hi", b.hi},
                       {"n", b.n},
                       {"mean_diff", b.mean_diff},
                       {"std_error", b.std_error},
                       {"skipped", b.skipped},
                       {"passed", b.passed}});
  }
  json j = {{"runs", s.runs},
            {"errors", s.errors},
            {"t_max", t_max},
            {"herd_freq", s.herd_freq},
            {"herd_on_inferior_freq", s.herd_on_inferior_freq},
            {"learned_wrong", s.learned_wrong},
            {"wrong_vertex_bound", s.wrong_vertex_bound},
            {"deterrence_terminations", s.deterrence_terminations},
            {"moving_fraction", s.moving_fraction},
            {"interior_steps", s.interior_steps},
            {"hitting_time",
             {{"count", s.hitting.count},
              {"mean", s.hitting.mean},
              {"p50", s.hitting.p50},
              {"p90", s.hitting.p90},
              {"max", s.hitting.max}}},
            {"by_state", {{"0", state_json(s.by_state[0])}, {"1", state_json(s.by_state[1])}}},
            {"martingale",
             {{"passed", s.martingale.passed()},
              {"tested", s.martingale.tested},
              {"skipped", s.martingale.skipped},
              {"buckets", buckets}}}};
  return j.dump(2);
}

RunResult run(const ExperimentConfig& c) {
  const auto start = std::chrono::steady_clock::now();
  validate_config(c);
  Outputs out;
  const std::string config_text = emit_config(c);
  out.add("config.yaml", config_text);
  switch (c.mode) {
    case Mode::ValidateSignals: run_validate(c, out); break;
    case Mode::SolveStage: run_solve(c, out); break;
    case Mode::SweepMu: run_sweep(c, out); break;
    case Mode::Simulate: run_simulate(c, out); break;
    case Mode::MonteCarlo: run_monte_carlo(c, out, ""); break;
    case Mode::FarsightedThreshold: run_farsighted(c, out); break;
    case Mode::Dichotomy: run_dichotomy(c, out); break;
    case Mode::StageSweep: run_stage_sweep(c, out); break;
  }

  RunResult res;
  res.manifest.config_hash = config_hash(c);
  res.manifest.artifact_version = kArtifactVersion;
  res.manifest.mode = to_string(c.mode);
  res.manifest.seed = c.seed;
  const fs::path dir(c.out);
  fs::create_directories(dir);
  for (const auto& [name, bytes] : out.files) {
    write_atomic(dir / name, bytes);
    res.manifest.files.emplace_back(name, sha256_hex(bytes));
  }
  res.check_failures = out.failures;
  res.manifest.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  json files = json::array();
  for (const auto& [name, sha] : res.manifest.files) files.push_back({{"path", name}, {"sha256", sha}});
  json m = {{"artifact_version", res.manifest.artifact_version},
            {"mode", res.manifest.mode},
            {"config_hash", res.manifest.config_hash},
            {"seed", c.seed ? json(*c.seed) : json(nullptr)},
            {"wall_clock_seconds", res.manifest.wall_clock_seconds},
            {"checks_passed", res.checks_passed()},
            {"check_failures", res.check_failures},
            {"files", files}};
  write_atomic(dir / "manifest.json", dump(m));
  return res;
}

}  // namespace herd
