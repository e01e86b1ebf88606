#include "herd/dynamics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <thread>

#include <fmt/format.h>

namespace herd {

const char* to_string(Outcome o) {
  switch (o) {
    case Outcome::LearnedCorrect: return "learned_correct";
    case Outcome::LearnedWrong: return "learned_wrong";
    case Outcome::HerdOnFirm0: return "herd_on_firm0";
    case Outcome::HerdOnFirm1: return "herd_on_firm1";
    case Outcome::Undecided: return "undecided";
  }
  return "?";
}

const char* to_string(StopReason r) {
  switch (r) {
    case StopReason::None: return "";
    case StopReason::Learned: return "learned";
    case StopReason::Deterrence: return "deterrence";
    case StopReason::Horizon: return "horizon";
  }
  return "?";
}

StopReason stop_reason_from_string(const std::string& s) {
  if (s.empty()) return StopReason::None;
  if (s == "learned") return StopReason::Learned;
  if (s == "deterrence") return StopReason::Deterrence;
  if (s == "horizon") return StopReason::Horizon;
  throw DomainError("unknown stop reason '" + s + "'");
}

// ---------------------------------------------------------------------------
// StageCache

StageCache::StageCache(const SignalStructure& s, SolverOptions opt, double bucket)
    : s_(s), opt_(opt), bucket_(bucket) {
  if (!(bucket > 0.0 && bucket < 0.5)) throw DomainError("cache bucket width must lie in (0, 0.5)");
}

double StageCache::bucket_centre(double mu) const {
  const auto k = static_cast<long long>(std::floor(mu / bucket_));
  return std::clamp((static_cast<double>(k) + 0.5) * bucket_, 0.5 * bucket_, 1.0 - 0.5 * bucket_);
}

const StageEquilibrium& StageCache::get(double mu) {
  const double centre = bucket_centre(mu);
  const auto key = static_cast<long long>(std::llround(centre / bucket_ - 0.5));
  std::promise<std::shared_ptr<const StageEquilibrium>> promise;
  std::shared_future<std::shared_ptr<const StageEquilibrium>> fut;
  bool owner = false;
  {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = map_.find(key);
    if (it == map_.end()) {
      fut = promise.get_future().share();
      map_.emplace(key, fut);
      owner = true;
    } else {
      fut = it->second;
    }
  }
  if (owner) {
    try {
      promise.set_value(std::make_shared<const StageEquilibrium>(solve_stage(centre, s_, opt_)));
    } catch (...) {
      promise.set_exception(std::current_exception());
    }
  }
  return *fut.get();
}

std::size_t StageCache::size() const {
  std::lock_guard<std::mutex> lock(mu_);
  return map_.size();
}

// ---------------------------------------------------------------------------
// Simulation

std::mt19937_64 run_engine(std::uint64_t seed, std::size_t run) {
  const auto r = static_cast<std::uint64_t>(run);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(r >> 32)};
  return std::mt19937_64(seq);
}

namespace {

bool may_deter(double mu, const SignalStructure& s) {
  const auto b = posterior_bounds(mu, s);
  return (s.support_lo() > 0.0 && b.lo >= 0.5) || (s.support_hi() < 1.0 && b.hi <= 0.5);
}

Step play_period(std::size_t t, double mu, const PriceVector& tau, State w, const SignalStructure& s,
                 std::mt19937_64& rng) {
  Step st;
  st.t = t;
  st.mu = mu;
  st.tau = tau;
  const auto c = decision_cuts(mu, tau);
  st.cuts = c.cuts;
  const double p = sample_belief(s, w, rng);
  st.action = decision(posterior(mu, p), tau, mu);
  st.mu_next = update_after_action(mu, c.cuts, c.regime, st.action, s);
  return st;
}

// A cached equilibrium was solved at its bucket centre. Its weights are read
// as weights over grid indices and applied to the grids rebuilt at the exact
// mu, so every price stays inside the bounds that hold at mu.
struct ExactGrids {
  std::vector<double> g0;
  std::vector<double> g1;
};

ExactGrids exact_grids(const StageEquilibrium& eq, double mu, const SignalStructure& s) {
  if (eq.mu == mu) return {eq.phi0.grid, eq.phi1.grid};
  return {price_grid_firm0(mu, s, eq.phi0.grid.size()), price_grid_firm1(mu, s, eq.phi1.grid.size())};
}

double expected_correctness(const StageEquilibrium& eq, double mu, State w, const SignalStructure& s) {
  const auto g = exact_grids(eq, mu, s);
  double acc = 0.0;
  for (std::size_t i = 0; i < eq.phi0.grid.size(); ++i) {
    const double a = eq.phi0.weights[i];
    if (a <= 0.0) continue;
    for (std::size_t j = 0; j < eq.phi1.grid.size(); ++j) {
      const double b = eq.phi1.weights[j];
      if (b <= 0.0) continue;
      acc += a * b * purchase_correct_probability(mu, {g.g0[i], g.g1[j]}, w, s);
    }
  }
  return acc;
}

// Myopic equilibrium prices at mu; two uniform draws.
PriceVector draw_prices(double mu, const SignalStructure& s, StageCache& cache, std::mt19937_64& rng) {
  const StageEquilibrium* eq = &cache.get(mu);
  StageEquilibrium exact;
  if (eq->classification != Classification::NonDeterrence) {
    // The bucket centre (nearly) deters but mu itself does not; solve at mu.
    exact = solve_stage(mu, s, cache.options());
    eq = &exact;
  }
  const double u0 = unit_uniform(rng);
  const double u1 = unit_uniform(rng);
  const auto g = exact_grids(*eq, mu, s);
  return {g.g0[eq->phi0.sample_index(u0)], g.g1[eq->phi1.sample_index(u1)]};
}

}  // namespace

TrajectoryRecord simulate(const SignalStructure& s, const SimulationOptions& opt, std::size_t run,
                          StageCache& cache) {
  if (!(opt.mu0 > opt.eps_learn && opt.mu0 < 1.0 - opt.eps_learn)) {
    throw DomainError(fmt::format("mu0={} must lie in (eps_learn, 1 - eps_learn)", opt.mu0));
  }
  if (opt.t_max == 0) throw DomainError("t_max must be positive");
  auto rng = run_engine(opt.seed, run);
  TrajectoryRecord tr;
  tr.run = run;
  tr.mu0 = opt.mu0;
  tr.state = opt.state ? *opt.state : (unit_uniform(rng) < opt.mu0 ? State::Zero : State::One);

  double mu = opt.mu0;
  const std::size_t tail = std::max<std::size_t>(opt.herd_tail, 1);
  for (std::size_t t = 0; t < opt.t_max; ++t) {
    if (may_deter(mu, s)) {
      if (auto d = deterrence_candidate(mu, s, cache.options())) {
        const PriceVector tau{d->phi0.grid.front(), d->phi1.grid.front()};
        tr.deterrence_onset = t;
        for (std::size_t k = 0; k < tail && t + k < opt.t_max; ++k) {
          Step st = play_period(t + k, mu, tau, tr.state, s, rng);
          st.frozen = true;
          if (st.mu_next != mu) {
            throw Error(fmt::format("belief moved under a deterrence profile at mu={} (run {})", mu, run));
          }
          tr.steps.push_back(st);
        }
        tr.stop = StopReason::Deterrence;
        break;
      }
    }
    Step st = play_period(t, mu, draw_prices(mu, s, cache, rng), tr.state, s, rng);
    tr.steps.push_back(st);
    mu = st.mu_next;
    if (mu <= opt.eps_learn || mu >= 1.0 - opt.eps_learn) {
      tr.stop = StopReason::Learned;
      break;
    }
  }
  if (tr.stop == StopReason::None) tr.stop = StopReason::Horizon;
  tr.terminal_mu = tr.steps.empty() ? opt.mu0 : tr.steps.back().mu_next;
  if (tr.stop == StopReason::Learned && opt.continue_after_learning) {
    for (std::size_t t = tr.steps.size(); t < opt.t_max && mu > 0.0 && mu < 1.0; ++t) {
      const auto tau = draw_prices(mu, s, cache, rng);
      tr.continued_correct.push_back(purchase_correct_probability(mu, tau, tr.state, s));
      mu = play_period(t, mu, tau, tr.state, s, rng).mu_next;
    }
  }
  tr.outcome = classify_outcome(tr, opt.eps_learn);
  tr.hitting_time = hitting_time(tr);
  return tr;
}

Outcome classify_outcome(const TrajectoryRecord& tr, double eps_learn) {
  const double mu = tr.steps.empty() ? tr.terminal_mu : tr.steps.back().mu_next;
  if (tr.stop == StopReason::Deterrence) {
    // The deterring firm is the one every frozen consumer buys from.
    const Action a = tr.steps.empty() ? (mu >= 0.5 ? Action::Buy0 : Action::Buy1) : tr.steps.back().action;
    return a == Action::Buy1 ? Outcome::HerdOnFirm1 : Outcome::HerdOnFirm0;
  }
  if (mu >= 1.0 - eps_learn) return tr.state == State::Zero ? Outcome::LearnedCorrect : Outcome::LearnedWrong;
  if (mu <= eps_learn) return tr.state == State::One ? Outcome::LearnedCorrect : Outcome::LearnedWrong;
  return Outcome::Undecided;
}

std::optional<std::size_t> hitting_time(const TrajectoryRecord& tr) {
  const Action right = tr.state == State::Zero ? Action::Buy0 : Action::Buy1;
  if (tr.steps.empty() || tr.steps.back().action != right) return std::nullopt;
  std::size_t k = tr.steps.size();
  while (k > 0 && tr.steps[k - 1].action == right) --k;
  return tr.steps[k].t;
}

double purchase_correct_probability(double mu, const PriceVector& tau, State w, const SignalStructure& s) {
  const auto c = decision_cuts(mu, tau);
  if (w == State::Zero) return 1.0 - s.cdf(State::Zero, c.cuts.v0);
  return s.cdf(State::One, c.regime == Regime::Full ? c.cuts.v0 : c.cuts.v1);
}

// ---------------------------------------------------------------------------
// Martingale check

bool MartingaleReport::passed() const {
  return std::all_of(buckets.begin(), buckets.end(), [](const MartingaleBucket& b) { return b.passed; });
}

MartingaleReport martingale_test(const std::vector<TrajectoryRecord>& records, std::size_t buckets,
                                 std::size_t min_count) {
  if (buckets == 0) throw DomainError("martingale_test needs at least one bucket");
  std::vector<double> sum(buckets, 0.0);
  std::vector<double> sumsq(buckets, 0.0);
  std::vector<std::size_t> n(buckets, 0);
  for (const auto& tr : records) {
    for (const auto& st : tr.steps) {
      const auto k = std::min(buckets - 1, static_cast<std::size_t>(st.mu * static_cast<double>(buckets)));
      const double d = st.mu_next - st.mu;
      sum[k] += d;
      sumsq[k] += d * d;
      ++n[k];
    }
  }
  MartingaleReport rep;
  for (std::size_t k = 0; k < buckets; ++k) {
    MartingaleBucket b;
    b.lo = static_cast<double>(k) / static_cast<double>(buckets);
    b.hi = static_cast<double>(k + 1) / static_cast<double>(buckets);
    b.n = n[k];
    if (n[k] < min_count) {
      b.skipped = true;
      ++rep.skipped;
      rep.buckets.push_back(b);
      continue;
    }
    const double cnt = static_cast<double>(n[k]);
    b.mean_diff = sum[k] / cnt;
    const double var = std::max(0.0, (sumsq[k] - cnt * b.mean_diff * b.mean_diff) / (cnt - 1.0));
    b.std_error = std::sqrt(var / cnt);
    b.passed = b.std_error > 0.0 ? std::abs(b.mean_diff) < 3.0 * b.std_error : b.mean_diff == 0.0;
    ++rep.tested;
    rep.buckets.push_back(b);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Aggregation

namespace {

double quantile_sorted(const std::vector<double>& v, double q) {
  if (v.empty()) return 0.0;
  const auto k = static_cast<std::size_t>(std::floor(q * static_cast<double>(v.size() - 1)));
  return v[k];
}

double terminal_correctness(const TrajectoryRecord& tr, StageCache& cache) {
  const auto& s = cache.structure();
  if (tr.stop == StopReason::Deterrence) {
    const bool zero = tr.outcome == Outcome::HerdOnFirm0;
    return (tr.state == State::Zero) == zero ? 1.0 : 0.0;
  }
  const double mu = std::clamp(tr.terminal_mu, 1e-9, 1.0 - 1e-9);
  const auto& eq = cache.get(mu);
  return expected_correctness(eq, mu, tr.state, s);
}

}  // namespace

double wrong_vertex_probability_bound(double mu0, double eps, State w) {
  const double odds = w == State::Zero ? (1.0 - mu0) / mu0 : mu0 / (1.0 - mu0);
  return std::min(1.0, odds * eps / (1.0 - eps));
}

std::size_t poisson_quantile(double mean, double q) {
  double pmf = std::exp(-mean);
  double cdf = pmf;
  std::size_t k = 0;
  while (cdf < q && k < 1000000) {
    ++k;
    pmf *= mean / static_cast<double>(k);
    cdf += pmf;
  }
  return k;
}

MonteCarloSummary summarize(const std::vector<TrajectoryRecord>& records, std::size_t t_max, double eps_learn,
                            StageCache& cache, std::size_t errors) {
  const auto& s = cache.structure();
  MonteCarloSummary sum;
  sum.runs = records.size();
  sum.errors = errors;
  std::array<std::vector<double>, 2> step_acc{std::vector<double>(t_max, 0.0), std::vector<double>(t_max, 0.0)};
  std::array<std::vector<double>, 2> tail_acc{std::vector<double>(t_max + 1, 0.0),
                                              std::vector<double>(t_max + 1, 0.0)};
  std::vector<double> hits;
  std::size_t moving = 0;

  for (const auto& tr : records) {
    const auto w = static_cast<std::size_t>(tr.state);
    auto& st = sum.by_state[w];
    ++st.runs;
    switch (tr.outcome) {
      case Outcome::LearnedCorrect: ++st.learned_correct; break;
      case Outcome::LearnedWrong: ++st.learned_wrong; break;
      case Outcome::HerdOnFirm0: ++st.herd0; break;
      case Outcome::HerdOnFirm1: ++st.herd1; break;
      case Outcome::Undecided: ++st.undecided; break;
    }
    if ((tr.outcome == Outcome::HerdOnFirm0 && tr.state == State::One) ||
        (tr.outcome == Outcome::HerdOnFirm1 && tr.state == State::Zero)) {
      ++st.herd_on_inferior;
    }
    if (tr.stop == StopReason::Deterrence) ++sum.deterrence_terminations;
    sum.wrong_vertex_bound += wrong_vertex_probability_bound(tr.mu0, eps_learn, tr.state);
    if (tr.outcome == Outcome::LearnedCorrect && tr.hitting_time) hits.push_back(static_cast<double>(*tr.hitting_time));

    const std::size_t len = std::min(tr.steps.size(), t_max);
    for (std::size_t t = 0; t < len; ++t) {
      const auto& x = tr.steps[t];
      step_acc[w][t] += purchase_correct_probability(x.mu, x.tau, tr.state, s);
      if (!x.frozen && x.mu >= eps_learn && x.mu <= 1.0 - eps_learn) {
        ++sum.interior_steps;
        if (std::abs(x.mu_next - x.mu) > 1e-6) ++moving;
      }
    }
    std::size_t end = len;
    for (std::size_t k = 0; k < tr.continued_correct.size() && end < t_max; ++k) {
      step_acc[w][end++] += tr.continued_correct[k];
    }
    if (end < t_max) {
      tail_acc[w][end] += tr.continued_correct.empty() ? terminal_correctness(tr, cache) : tr.continued_correct.back();
    }
  }

  std::size_t herds = 0;
  std::size_t inferior = 0;
  for (std::size_t w = 0; w < 2; ++w) {
    auto& st = sum.by_state[w];
    const double n = static_cast<double>(st.runs);
    st.learned_correct_freq = st.runs ? static_cast<double>(st.learned_correct) / n : 0.0;
    st.herd_freq = st.runs ? static_cast<double>(st.herd0 + st.herd1) / n : 0.0;
    st.purchase_correct.assign(t_max, 0.0);
    double carried = 0.0;
    for (std::size_t t = 0; t < t_max; ++t) {
      carried += tail_acc[w][t];
      st.purchase_correct[t] = st.runs ? (step_acc[w][t] + carried) / n : 0.0;
    }
    herds += st.herd0 + st.herd1;
    inferior += st.herd_on_inferior;
    sum.learned_wrong += st.learned_wrong;
  }
  const double runs = static_cast<double>(std::max<std::size_t>(sum.runs, 1));
  sum.herd_freq = static_cast<double>(herds) / runs;
  sum.herd_on_inferior_freq = static_cast<double>(inferior) / runs;
  sum.moving_fraction = sum.interior_steps ? static_cast<double>(moving) / static_cast<double>(sum.interior_steps) : 0.0;

  std::sort(hits.begin(), hits.end());
  sum.hitting.count = hits.size();
  if (!hits.empty()) {
    double total = 0.0;
    for (double h : hits) total += h;
    sum.hitting.mean = total / static_cast<double>(hits.size());
    sum.hitting.p50 = quantile_sorted(hits, 0.5);
    sum.hitting.p90 = quantile_sorted(hits, 0.9);
    sum.hitting.max = hits.back();
  }
  sum.martingale = martingale_test(records);
  return sum;
}

MonteCarloResult monte_carlo(const SignalStructure& s, const MonteCarloOptions& opt, StageCache& cache) {
  if (opt.runs == 0) throw ConfigError("monte_carlo: runs must be at least 1");
  std::vector<std::optional<TrajectoryRecord>> slots(opt.runs);
  std::vector<std::exception_ptr> failures(opt.runs);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < opt.runs; i = next++) {
      try {
        slots[i] = simulate(s, opt.sim, i, cache);
      } catch (...) {
        failures[i] = std::current_exception();
      }
    }
  };
  std::size_t threads = opt.threads ? opt.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, opt.runs);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t k = 0; k < threads; ++k) pool.emplace_back(worker);
  }

  MonteCarloResult res;
  std::exception_ptr first;
  for (std::size_t i = 0; i < opt.runs; ++i) {
    if (slots[i]) {
      res.records.push_back(std::move(*slots[i]));
      continue;
    }
    if (!first) first = failures[i];
    try {
      std::rethrow_exception(failures[i]);
    } catch (const std::exception& e) {
      res.errors.push_back({i, e.what()});
    }
  }
  if (static_cast<double>(res.errors.size()) > opt.max_error_rate * static_cast<double>(opt.runs)) {
    std::rethrow_exception(first);
  }
  res.summary = summarize(res.records, opt.sim.t_max, opt.sim.eps_learn, cache, res.errors.size());
  return res;
}

// ---------------------------------------------------------------------------
// CSV

void write_trajectories_csv(std::ostream& os, const std::vector<TrajectoryRecord>& records) {
  os << "run,t,mu,tau0,tau1,action,v0,v1,state,mu_next,frozen,stop\n";
  for (const auto& tr : records) {
    for (std::size_t k = 0; k < tr.steps.size(); ++k) {
      const auto& x = tr.steps[k];
      const bool last = k + 1 == tr.steps.size();
      os << fmt::format("{},{},{:.17g},{:.17g},{:.17g},{},{:.17g},{:.17g},{},{:.17g},{},{}\n", tr.run, x.t, x.mu,
                        x.tau.tau0, x.tau.tau1, to_string(x.action), x.cuts.v0, x.cuts.v1, to_string(tr.state),
                        x.mu_next, x.frozen ? 1 : 0, last ? to_string(tr.stop) : "");
    }
  }
}

std::vector<TrajectoryRecord> read_trajectories_csv(std::istream& is, double eps_learn) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("run,t,mu", 0) != 0) {
    throw ConfigError("trajectory CSV: missing or unexpected header");
  }
  std::map<std::size_t, TrajectoryRecord> runs;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    if (f.size() != 12) throw ConfigError(fmt::format("trajectory CSV line {}: expected 12 fields", lineno));
    try {
      const auto run = static_cast<std::size_t>(std::stoull(f[0]));
      auto& tr = runs[run];
      tr.run = run;
      Step x;
      x.t = static_cast<std::size_t>(std::stoull(f[1]));
      x.mu = std::stod(f[2]);
      x.tau = {std::stod(f[3]), std::stod(f[4])};
      x.action = action_from_string(f[5]);
      x.cuts = {std::stod(f[6]), std::stod(f[7])};
      tr.state = f[8] == "0" ? State::Zero : State::One;
      x.mu_next = std::stod(f[9]);
      x.frozen = f[10] == "1";
      if (tr.steps.empty()) tr.mu0 = x.mu;
      if (x.frozen && !tr.deterrence_onset) tr.deterrence_onset = x.t;
      tr.steps.push_back(x);
      if (!f[11].empty()) tr.stop = stop_reason_from_string(f[11]);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(fmt::format("trajectory CSV line {}: {}", lineno, e.what()));
    }
  }
  std::vector<TrajectoryRecord> out;
  for (auto& [run, tr] : runs) {
    tr.terminal_mu = tr.steps.back().mu_next;
    tr.outcome = classify_outcome(tr, eps_learn);
    tr.hitting_time = hitting_time(tr);
    out.push_back(std::move(tr));
  }
  return out;
}

}  // namespace herd
