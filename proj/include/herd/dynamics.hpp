#pragma once

// Repeated arrival dynamic under myopic stage-equilibrium play, trajectory
// classification and Monte Carlo aggregation.

#include <array>
#include <cstddef>
#include <cstdint>
#include <future>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "herd/stage_game.hpp"

namespace herd {

enum class Outcome { LearnedCorrect, LearnedWrong, HerdOnFirm0, HerdOnFirm1, Undecided };
const char* to_string(Outcome o);

/// Why a run stopped; recorded on its last step.
enum class StopReason { None, Learned, Deterrence, Horizon };
const char* to_string(StopReason r);
StopReason stop_reason_from_string(const std::string& s);

struct Step {
  std::size_t t = 0;
  double mu = 0.5;
  PriceVector tau;
  Action action = Action::Buy0;
  DecisionCuts cuts;
  double mu_next = 0.5;
  // Set on periods played after a verified deterrence profile.
  bool frozen = false;
};

struct TrajectoryRecord {
  std::size_t run = 0;
  State state = State::Zero;
  double mu0 = 0.5;
  std::vector<Step> steps;
  StopReason stop = StopReason::None;
  Outcome outcome = Outcome::Undecided;
  double terminal_mu = 0.5;
  std::optional<std::size_t> deterrence_onset;
  std::optional<std::size_t> hitting_time;
  // Purchase-correctness probabilities for the periods after a learned stop,
  // from the continued (unrecorded) process up to t_max.
  std::vector<double> continued_correct;
};

/// Memo of stage equilibria keyed by mu bucket; each bucket is solved once,
/// at its centre. Safe for concurrent lookup; concurrent misses on the same
/// bucket wait for a single solve.
class StageCache {
 public:
  StageCache(const SignalStructure& s, SolverOptions opt, double bucket = 1e-3);

  const StageEquilibrium& get(double mu);
  std::size_t size() const;
  const SolverOptions& options() const { return opt_; }
  const SignalStructure& structure() const { return s_; }
  double bucket_width() const { return bucket_; }
  double bucket_centre(double mu) const;

 private:
  const SignalStructure& s_;
  SolverOptions opt_;
  double bucket_;
  mutable std::mutex mu_;
  std::unordered_map<long long, std::shared_future<std::shared_ptr<const StageEquilibrium>>> map_;
};

struct SimulationOptions {
  double mu0 = 0.5;
  std::optional<State> state;  // drawn from mu0 when absent
  std::size_t t_max = 10000;
  double eps_learn = 1e-3;
  std::uint64_t seed = 1;
  // Frozen periods played after a verified deterrence profile (at least 1).
  std::size_t herd_tail = 1;
  // After a learned stop keep playing until t_max to fill continued_correct.
  bool continue_after_learning = true;
};

/// Engine for run `run` of a batch seeded with `seed`.
std::mt19937_64 run_engine(std::uint64_t seed, std::size_t run);

TrajectoryRecord simulate(const SignalStructure& s, const SimulationOptions& opt, std::size_t run,
                          StageCache& cache);

/// Outcome from the stop reason, terminal belief and realized state.
Outcome classify_outcome(const TrajectoryRecord& tr, double eps_learn);

/// First period from which every recorded consumer bought the product of
/// the realized state, if the last consumer did.
std::optional<std::size_t> hitting_time(const TrajectoryRecord& tr);

/// Probability that a consumer facing prices `tau` at belief mu buys the
/// product matching state w.
double purchase_correct_probability(double mu, const PriceVector& tau, State w, const SignalStructure& s);

struct MartingaleBucket {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t n = 0;
  double mean_diff = 0.0;
  double std_error = 0.0;
  bool skipped = false;
  bool passed = true;
};

struct MartingaleReport {
  std::vector<MartingaleBucket> buckets;
  std::size_t tested = 0;
  std::size_t skipped = 0;
  bool passed() const;
};

/// Buckets transitions by mu_t and compares mean(mu_{t+1} - mu_t) with three
/// standard errors. Buckets with fewer than `min_count` transitions are
/// skipped.
MartingaleReport martingale_test(const std::vector<TrajectoryRecord>& records, std::size_t buckets = 20,
                                 std::size_t min_count = 100);

struct StateSummary {
  std::size_t runs = 0;
  std::size_t learned_correct = 0;
  std::size_t learned_wrong = 0;
  std::size_t herd0 = 0;
  std::size_t herd1 = 0;
  std::size_t undecided = 0;
  std::size_t herd_on_inferior = 0;
  double learned_correct_freq = 0.0;
  double herd_freq = 0.0;
  // Rate at which period-t consumers buy the matching product, t < t_max.
  std::vector<double> purchase_correct;
};

struct HittingTimeStats {
  std::size_t count = 0;
  double mean = 0.0;
  double p50 = 0.0;
  double p90 = 0.0;
  double max = 0.0;
};

struct MonteCarloSummary {
  std::size_t runs = 0;
  std::size_t errors = 0;
  std::array<StateSummary, 2> by_state;
  double herd_freq = 0.0;
  double herd_on_inferior_freq = 0.0;
  std::size_t learned_wrong = 0;
  std::size_t deterrence_terminations = 0;
  HittingTimeStats hitting;
  // Fraction of interior, non-frozen steps with |mu_{t+1} - mu_t| > 1e-6.
  double moving_fraction = 0.0;
  std::size_t interior_steps = 0;
  MartingaleReport martingale;
  // Upper bound on the expected LearnedWrong count: (1 - mu)/mu is a
  // martingale given state 0, so a run reaches mu <= eps with probability at
  // most (1 - mu0)/mu0 * eps/(1 - eps) (mirror for state 1).
  double wrong_vertex_bound = 0.0;
};

/// Per-run bound on reaching the wrong edge of [eps, 1 - eps] from mu0.
double wrong_vertex_probability_bound(double mu0, double eps, State w);
/// Smallest k with P(Poisson(mean) <= k) >= q.
std::size_t poisson_quantile(double mean, double q);

/// Aggregates a batch. Periods after a learned stop use continued_correct;
/// any later periods carry the run's terminal purchase-correctness value,
/// taken from the stage equilibrium at the terminal belief (cache) or from
/// the frozen deterrence profile.
MonteCarloSummary summarize(const std::vector<TrajectoryRecord>& records, std::size_t t_max, double eps_learn,
                            StageCache& cache, std::size_t errors = 0);

struct MonteCarloOptions {
  SimulationOptions sim;
  std::size_t runs = 1000;
  std::size_t threads = 0;  // 0: hardware concurrency
  double max_error_rate = 1e-3;
};

struct RunError {
  std::size_t run = 0;
  std::string message;
};

struct MonteCarloResult {
  std::vector<TrajectoryRecord> records;  // successful runs, ordered by run
  std::vector<RunError> errors;
  MonteCarloSummary summary;
};

/// Runs `runs` independent trajectories. Results do not depend on the
/// thread count. Rethrows the first run error if more than max_error_rate of
/// the runs failed.
MonteCarloResult monte_carlo(const SignalStructure& s, const MonteCarloOptions& opt, StageCache& cache);

/// CSV with columns run,t,mu,tau0,tau1,action,v0,v1,state,mu_next,frozen,stop.
void write_trajectories_csv(std::ostream& os, const std::vector<TrajectoryRecord>& records);
/// Inverse of write_trajectories_csv; outcome fields are recomputed with
/// classify_outcome.
std::vector<TrajectoryRecord> read_trajectories_csv(std::istream& is, double eps_learn);

}  // namespace herd
