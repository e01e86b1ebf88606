#pragma once

// One-shot pricing game at public belief mu: consumer best reply, cut
// points, payoff surfaces and equilibrium search on finite price grids.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "herd/beliefs.hpp"
#include "herd/signals.hpp"
#include "herd/types.hpp"

namespace herd {

/// Consumer's best reply given posterior p_post on state 0. Buying wins ties
/// with the outside option; a tie between firms goes to firm 0 iff
/// mu_tie >= 1/2.
Action decision(double p_post, const PriceVector& tau, double mu_tie);

Regime market_regime(const PriceVector& tau);

struct CutResult {
  Regime regime = Regime::Full;
  DecisionCuts cuts;
};

/// Private-belief cut points at prior mu (clamped to [0, 1]).
CutResult decision_cuts(double mu, const PriceVector& tau);

struct Payoffs {
  double firm0 = 0.0;
  double firm1 = 0.0;
};

Payoffs payoffs(double mu, const PriceVector& tau, const SignalStructure& s);

/// Probability that each firm sells at (mu, tau), mixing over the state.
ActionProbabilities sale_probabilities(double mu, const PriceVector& tau, const SignalStructure& s);

struct MixedStrategy {
  std::vector<double> grid;
  std::vector<double> weights;

  double mean() const;
  /// Price drawn by inverse CDF of the weights with u in [0, 1).
  double sample(double u) const;
  /// Grid index drawn the same way.
  std::size_t sample_index(double u) const;
  /// Largest grid point carrying weight above `eps`.
  double max_support(double eps = 1e-12) const;
};

enum class Classification { DeterrenceBy0, DeterrenceBy1, NonDeterrence };
const char* to_string(Classification c);

enum class SolverPhase { Deterrence, Pure, LemkeHowson, FictitiousPlay, SupportEnumeration };
const char* to_string(SolverPhase p);

struct SolverOptions {
  std::size_t grid = 201;
  double regret_tol = 1e-4;
  double deterrence_tol = 1e-6;
  // Deviation gain allowed when verifying a deterrence profile. Kept at
  // round-off level: near mu = 1 the grid step is smaller than regret_tol, so
  // a looser bound would accept profiles that a finer grid rejects.
  double deterrence_verify_tol = 1e-12;
  std::size_t fp_iterations = 20000;
  std::size_t fp_check_every = 500;
  // Support enumeration only runs when both grids are at most this size.
  std::size_t support_enum_max_grid = 25;
  std::size_t support_enum_max_support = 2;
  std::size_t lh_max_labels = 16;
  double symmetry_tol = 1e-10;

  bool use_deterrence = true;
  bool use_pure = true;
  bool use_lemke_howson = true;
  bool use_fictitious_play = true;
  bool use_support_enumeration = true;
};

struct StageEquilibrium {
  double mu = 0.5;
  MixedStrategy phi0;
  MixedStrategy phi1;
  double sale_prob0 = 0.0;
  double sale_prob1 = 0.0;
  double exit_prob = 0.0;
  Classification classification = Classification::NonDeterrence;
  Payoffs payoff;
  // Best unilateral gain for each firm over its own grid.
  double regret0 = 0.0;
  double regret1 = 0.0;
  SolverPhase phase = SolverPhase::Pure;

  double grid_step0() const;
  double grid_step1() const;
};

/// Firm 0 prices on [max(0, 2 lo_mu - 1), 1]; firm 1 on [max(0, 1 - 2 hi_mu), 1].
std::vector<double> price_grid_firm0(double mu, const SignalStructure& s, std::size_t n);
std::vector<double> price_grid_firm1(double mu, const SignalStructure& s, std::size_t n);

/// Payoff and sale-probability matrices, rows indexed by firm 0's grid.
struct GameMatrices {
  std::vector<double> grid0;
  std::vector<double> grid1;
  Eigen::MatrixXd payoff0;
  Eigen::MatrixXd payoff1;
  Eigen::MatrixXd sale0;
  Eigen::MatrixXd sale1;
};

GameMatrices game_matrices(double mu, const SignalStructure& s, const std::vector<double>& grid0,
                           const std::vector<double>& grid1);

/// Fills sale probabilities, payoffs, regrets and classification for a
/// profile of mixed strategies over the grids of `g`.
StageEquilibrium evaluate_profile(double mu, const GameMatrices& g, const Eigen::VectorXd& w0,
                                  const Eigen::VectorXd& w1, const SolverOptions& opt);

/// Deterrence profile by either firm, verified against every grid deviation
/// within opt.deterrence_verify_tol. Empty if neither firm can deter at this mu.
std::optional<StageEquilibrium> deterrence_candidate(double mu, const SignalStructure& s,
                                                     const SolverOptions& opt);

/// Approximate Nash equilibrium of the grid game. Throws SolverFailure if no
/// phase reaches opt.regret_tol.
StageEquilibrium solve_stage(double mu, const SignalStructure& s, const SolverOptions& opt = {});

/// Largest gain either firm could obtain by a unilateral deviation to any
/// grid price, recomputed pointwise from payoffs().
struct RegretCertificate {
  double firm0 = 0.0;
  double firm1 = 0.0;
  double max() const { return firm0 > firm1 ? firm0 : firm1; }
};
RegretCertificate regret_certificate(const StageEquilibrium& eq, const SignalStructure& s);

enum class ThresholdSide { High, Low };

struct ThresholdResult {
  double mu_bar = 0.0;
  double bracket_lo = 0.0;
  double bracket_hi = 0.0;
  std::size_t solves = 0;
  // mu values sampled on each side to confirm the classification is monotone.
  std::vector<double> checked;
};

/// Bisects on mu for the boundary of the deterrence region: above mu_bar
/// firm 0 deters (High), below it firm 1 deters (Low). The bracket is
/// [0.5, 1 - edge] (or [edge, 0.5]). Throws DomainError if the extreme prior
/// shows no deterrence and Error on a non-monotone classification.
ThresholdResult find_threshold_mu(const SignalStructure& s, ThresholdSide side, const SolverOptions& opt,
                                  double tol = 1e-4, double edge = 1e-3);

}  // namespace herd
