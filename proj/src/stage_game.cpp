#include "herd/stage_game.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "herd/bimatrix.hpp"

namespace herd {

namespace {

double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

// Private belief whose posterior at prior mu equals q.
double invert_posterior(double mu, double q) {
  const double num = (1.0 - mu) * q;
  const double den = mu * (1.0 - q) + num;
  if (!(den > 0.0)) {
    throw DomainError(fmt::format("decision_cuts: degenerate denominator at mu={}, q={}", mu, q));
  }
  return clamp01(num / den);
}

std::vector<double> linspace(double a, double b, std::size_t n) {
  if (n < 2) throw DomainError("price grid needs at least two points");
  std::vector<double> g(n);
  const double step = (b - a) / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) g[i] = a + step * static_cast<double>(i);
  g.back() = b;
  return g;
}

Eigen::VectorXd one_hot(std::size_t n, std::size_t k) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  v(static_cast<Eigen::Index>(k)) = 1.0;
  return v;
}

MixedStrategy to_strategy(const std::vector<double>& grid, const Eigen::VectorXd& w) {
  MixedStrategy m;
  m.grid = grid;
  m.weights.assign(w.data(), w.data() + w.size());
  return m;
}

Classification classify_sales(double sale0, double sale1, double tol) {
  if (sale1 < tol && sale0 >= tol) return Classification::DeterrenceBy0;
  if (sale0 < tol && sale1 >= tol) return Classification::DeterrenceBy1;
  return Classification::NonDeterrence;
}

std::vector<std::size_t> lh_labels(std::size_t m, std::size_t n, std::size_t count) {
  const std::size_t total = m + n;
  std::vector<std::size_t> out;
  auto push = [&](std::size_t k) {
    if (k < total && std::find(out.begin(), out.end(), k) == out.end()) out.push_back(k);
  };
  push(0);
  push(m);
  push(m - 1);
  push(total - 1);
  for (std::size_t i = 1; out.size() < std::min(count, total) && i < total; ++i) {
    push((i * total) / std::max<std::size_t>(count, 1) % total);
    if (i > 4 * total) break;
  }
  for (std::size_t k = 0; out.size() < std::min(count, total) && k < total; ++k) push(k);
  return out;
}

}  // namespace

Action decision(double p_post, const PriceVector& tau, double mu_tie) {
  const double u0 = p_post - tau.tau0;
  const double u1 = (1.0 - p_post) - tau.tau1;
  if (u0 < 0.0 && u1 < 0.0) return Action::Exit;
  if (u0 > u1) return Action::Buy0;
  if (u1 > u0) return Action::Buy1;
  return mu_tie >= 0.5 ? Action::Buy0 : Action::Buy1;
}

Regime market_regime(const PriceVector& tau) {
  return tau.tau0 + tau.tau1 <= 1.0 ? Regime::Full : Regime::NonFull;
}

CutResult decision_cuts(double mu, const PriceVector& tau) {
  CutResult r;
  r.regime = market_regime(tau);
  if (r.regime == Regime::Full) {
    const double v = invert_posterior(mu, 0.5 * (1.0 + tau.tau0 - tau.tau1));
    r.cuts = {v, v};
  } else {
    r.cuts.v0 = invert_posterior(mu, tau.tau0);
    r.cuts.v1 = invert_posterior(mu, 1.0 - tau.tau1);
  }
  return r;
}

ActionProbabilities sale_probabilities(double mu, const PriceVector& tau, const SignalStructure& s) {
  const auto c = decision_cuts(mu, tau);
  return action_probabilities(mu, c.cuts, c.regime, s);
}

Payoffs payoffs(double mu, const PriceVector& tau, const SignalStructure& s) {
  const auto c = decision_cuts(mu, tau);
  const double g0 = s.cdf_mix(mu, c.cuts.v0);
  const double g1 = c.regime == Regime::Full ? g0 : s.cdf_mix(mu, c.cuts.v1);
  return {(1.0 - g0) * tau.tau0, g1 * tau.tau1};
}

double MixedStrategy::mean() const {
  double m = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) m += grid[i] * weights[i];
  return m;
}

double MixedStrategy::sample(double u) const { return grid[sample_index(u)]; }

std::size_t MixedStrategy::sample_index(double u) const {
  double total = 0.0;
  for (double w : weights) total += w;
  const double target = u * total;
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    acc += weights[i];
    last = i;
    if (target < acc) return i;
  }
  return last;
}

double MixedStrategy::max_support(double eps) const {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (weights[i] > eps) m = std::max(m, grid[i]);
  }
  return m;
}

const char* to_string(Classification c) {
  switch (c) {
    case Classification::DeterrenceBy0: return "deterrence_by_0";
    case Classification::DeterrenceBy1: return "deterrence_by_1";
    case Classification::NonDeterrence: return "non_deterrence";
  }
  return "?";
}

const char* to_string(SolverPhase p) {
  switch (p) {
    case SolverPhase::Deterrence: return "deterrence";
    case SolverPhase::Pure: return "pure";
    case SolverPhase::LemkeHowson: return "lemke_howson";
    case SolverPhase::FictitiousPlay: return "fictitious_play";
    case SolverPhase::SupportEnumeration: return "support_enumeration";
  }
  return "?";
}

double StageEquilibrium::grid_step0() const {
  return phi0.grid.size() < 2 ? 0.0 : phi0.grid[1] - phi0.grid[0];
}

double StageEquilibrium::grid_step1() const {
  return phi1.grid.size() < 2 ? 0.0 : phi1.grid[1] - phi1.grid[0];
}

std::vector<double> price_grid_firm0(double mu, const SignalStructure& s, std::size_t n) {
  const double lo = std::max(0.0, 2.0 * posterior(mu, s.support_lo()) - 1.0);
  return linspace(lo, 1.0, n);
}

std::vector<double> price_grid_firm1(double mu, const SignalStructure& s, std::size_t n) {
  const double lo = std::max(0.0, 1.0 - 2.0 * posterior(mu, s.support_hi()));
  return linspace(lo, 1.0, n);
}

GameMatrices game_matrices(double mu, const SignalStructure& s, const std::vector<double>& grid0,
                           const std::vector<double>& grid1) {
  GameMatrices g;
  g.grid0 = grid0;
  g.grid1 = grid1;
  const auto m = static_cast<Eigen::Index>(grid0.size());
  const auto n = static_cast<Eigen::Index>(grid1.size());
  g.payoff0.resize(m, n);
  g.payoff1.resize(m, n);
  g.sale0.resize(m, n);
  g.sale1.resize(m, n);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const PriceVector tau{grid0[static_cast<std::size_t>(i)], grid1[static_cast<std::size_t>(j)]};
      const auto c = decision_cuts(mu, tau);
      const double G0 = s.cdf_mix(mu, c.cuts.v0);
      const double G1 = c.regime == Regime::Full ? G0 : s.cdf_mix(mu, c.cuts.v1);
      g.sale0(i, j) = 1.0 - G0;
      g.sale1(i, j) = G1;
      g.payoff0(i, j) = (1.0 - G0) * tau.tau0;
      g.payoff1(i, j) = G1 * tau.tau1;
    }
  }
  return g;
}

StageEquilibrium evaluate_profile(double mu, const GameMatrices& g, const Eigen::VectorXd& w0,
                                  const Eigen::VectorXd& w1, const SolverOptions& opt) {
  StageEquilibrium eq;
  eq.mu = mu;
  eq.phi0 = to_strategy(g.grid0, w0);
  eq.phi1 = to_strategy(g.grid1, w1);
  eq.sale_prob0 = w0.dot(g.sale0 * w1);
  eq.sale_prob1 = w0.dot(g.sale1 * w1);
  eq.exit_prob = std::max(0.0, 1.0 - eq.sale_prob0 - eq.sale_prob1);
  const Eigen::VectorXd row_pay = g.payoff0 * w1;
  const Eigen::VectorXd col_pay = g.payoff1.transpose() * w0;
  eq.payoff = {w0.dot(row_pay), w1.dot(col_pay)};
  eq.regret0 = std::max(0.0, row_pay.maxCoeff() - eq.payoff.firm0);
  eq.regret1 = std::max(0.0, col_pay.maxCoeff() - eq.payoff.firm1);
  eq.classification = classify_sales(eq.sale_prob0, eq.sale_prob1, opt.deterrence_tol);
  return eq;
}

std::optional<StageEquilibrium> deterrence_candidate(double mu, const SignalStructure& s,
                                                     const SolverOptions& opt) {
  if (!(mu > 0.0 && mu < 1.0)) throw DomainError(fmt::format("deterrence_candidate: mu={} not interior", mu));
  const auto bounds = posterior_bounds(mu, s);
  const auto grid0 = price_grid_firm0(mu, s, opt.grid);
  const auto grid1 = price_grid_firm1(mu, s, opt.grid);

  // Only the candidate's row and column are needed to check deviations.
  auto check = [&](bool firm0_deters) -> std::optional<StageEquilibrium> {
    GameMatrices g;
    g.grid0 = firm0_deters ? grid0 : std::vector<double>{grid0.front()};
    g.grid1 = firm0_deters ? std::vector<double>{grid1.front()} : grid1;
    g = game_matrices(mu, s, g.grid0, g.grid1);
    const Eigen::VectorXd w0 = one_hot(g.grid0.size(), 0);
    const Eigen::VectorXd w1 = one_hot(g.grid1.size(), 0);
    auto eq = evaluate_profile(mu, g, w0, w1, opt);
    // The opponent is pinned at zero, so only the deterring firm's own
    // deviations are in the matrices; the pinned firm's are checked below.
    double other_gain = 0.0;
    if (firm0_deters) {
      for (double t : grid1) {
        other_gain = std::max(other_gain, payoffs(mu, {grid0.front(), t}, s).firm1 - eq.payoff.firm1);
      }
      eq.regret1 = other_gain;
    } else {
      for (double t : grid0) {
        other_gain = std::max(other_gain, payoffs(mu, {t, grid1.front()}, s).firm0 - eq.payoff.firm0);
      }
      eq.regret0 = other_gain;
    }
    const Classification want = firm0_deters ? Classification::DeterrenceBy0 : Classification::DeterrenceBy1;
    if (eq.classification != want) return std::nullopt;
    if (eq.regret0 > opt.deterrence_verify_tol || eq.regret1 > opt.deterrence_verify_tol) return std::nullopt;
    // Report the candidate on the full grids.
    eq.phi0 = to_strategy(grid0, one_hot(grid0.size(), 0));
    eq.phi1 = to_strategy(grid1, one_hot(grid1.size(), 0));
    eq.phase = SolverPhase::Deterrence;
    return eq;
  };

  if (s.support_lo() > 0.0 && bounds.lo >= 0.5) return check(true);
  if (s.support_hi() < 1.0 && bounds.hi <= 0.5) return check(false);
  return std::nullopt;
}

StageEquilibrium solve_stage(double mu, const SignalStructure& s, const SolverOptions& opt) {
  if (!(mu > 0.0 && mu < 1.0)) throw DomainError(fmt::format("solve_stage: mu={} not interior", mu));
  if (opt.use_deterrence) {
    if (auto d = deterrence_candidate(mu, s, opt)) return *d;
  }

  const auto g = game_matrices(mu, s, price_grid_firm0(mu, s, opt.grid), price_grid_firm1(mu, s, opt.grid));
  const Eigen::MatrixXd& A = g.payoff0;
  const Eigen::MatrixXd& B = g.payoff1;
  const bool symmetric = bimatrix::is_symmetric(A, B, opt.symmetry_tol);
  double best = std::numeric_limits<double>::infinity();

  auto accept = [&](const Eigen::VectorXd& w0, const Eigen::VectorXd& w1, SolverPhase phase)
      -> std::optional<StageEquilibrium> {
    auto eq = evaluate_profile(mu, g, w0, w1, opt);
    eq.phase = phase;
    const double r = std::max(eq.regret0, eq.regret1);
    best = std::min(best, r);
    if (r <= opt.regret_tol) return eq;
    return std::nullopt;
  };

  if (opt.use_pure) {
    if (auto p = bimatrix::best_pure_equilibrium(A, B, opt.regret_tol, symmetric)) {
      Eigen::Index i = 0;
      Eigen::Index j = 0;
      p->row.maxCoeff(&i);
      p->col.maxCoeff(&j);
      // A symmetric game keeps only symmetric answers.
      if (!symmetric || i == j) {
        if (auto eq = accept(p->row, p->col, SolverPhase::Pure)) return *eq;
      }
    }
  }

  if (opt.use_lemke_howson) {
    const auto m = static_cast<std::size_t>(A.rows());
    const auto n = static_cast<std::size_t>(A.cols());
    if (symmetric) {
      for (std::size_t k : lh_labels(m, 0, opt.lh_max_labels)) {
        if (k >= m) continue;
        if (auto x = bimatrix::symmetric_lemke_howson(A, k)) {
          if (auto eq = accept(*x, *x, SolverPhase::LemkeHowson)) return *eq;
        }
      }
    } else {
      for (std::size_t k : lh_labels(m, n, opt.lh_max_labels)) {
        if (auto p = bimatrix::lemke_howson(A, B, k)) {
          if (auto eq = accept(p->row, p->col, SolverPhase::LemkeHowson)) return *eq;
        }
      }
    }
  }

  if (opt.use_fictitious_play) {
    const double n = static_cast<double>(std::max(A.rows(), A.cols()));
    const double temperature = opt.regret_tol / (2.0 * std::log(n));
    auto fp = bimatrix::smoothed_fictitious_play(A, B, opt.fp_iterations, temperature, opt.regret_tol,
                                                 opt.fp_check_every);
    if (auto eq = accept(fp.profile.row, fp.profile.col, SolverPhase::FictitiousPlay)) return *eq;
  }

  if (opt.use_support_enumeration && static_cast<std::size_t>(A.rows()) <= opt.support_enum_max_grid &&
      static_cast<std::size_t>(A.cols()) <= opt.support_enum_max_grid) {
    if (auto p = bimatrix::support_enumeration(A, B, opt.regret_tol, opt.support_enum_max_support)) {
      if (auto eq = accept(p->row, p->col, SolverPhase::SupportEnumeration)) return *eq;
    }
  }

  throw SolverFailure(fmt::format("no stage equilibrium within regret {} at mu={} (best {:.3e})",
                                  opt.regret_tol, mu, best),
                      mu, best);
}

RegretCertificate regret_certificate(const StageEquilibrium& eq, const SignalStructure& s) {
  const auto& g0 = eq.phi0.grid;
  const auto& g1 = eq.phi1.grid;
  const auto& w0 = eq.phi0.weights;
  const auto& w1 = eq.phi1.weights;
  std::vector<double> row(g0.size(), 0.0);
  std::vector<double> col(g1.size(), 0.0);
  double v0 = 0.0;
  double v1 = 0.0;
  for (std::size_t i = 0; i < g0.size(); ++i) {
    for (std::size_t j = 0; j < g1.size(); ++j) {
      const auto p = payoffs(eq.mu, {g0[i], g1[j]}, s);
      row[i] += w1[j] * p.firm0;
      col[j] += w0[i] * p.firm1;
      v0 += w0[i] * w1[j] * p.firm0;
      v1 += w0[i] * w1[j] * p.firm1;
    }
  }
  RegretCertificate c;
  c.firm0 = std::max(0.0, *std::max_element(row.begin(), row.end()) - v0);
  c.firm1 = std::max(0.0, *std::max_element(col.begin(), col.end()) - v1);
  return c;
}

ThresholdResult find_threshold_mu(const SignalStructure& s, ThresholdSide side, const SolverOptions& opt,
                                  double tol, double edge) {
  const bool high = side == ThresholdSide::High;
  const Classification target = high ? Classification::DeterrenceBy0 : Classification::DeterrenceBy1;
  ThresholdResult res;
  auto deters = [&](double mu) {
    ++res.solves;
    return solve_stage(mu, s, opt).classification == target;
  };

  // Deterring end and the neutral prior.
  const double extreme = high ? 1.0 - edge : edge;
  if (!deters(extreme)) {
    throw DomainError(fmt::format("no deterrence by firm {} at mu={}", high ? 0 : 1, extreme));
  }
  if (deters(0.5)) {
    throw Error("deterrence already at mu=0.5; threshold search needs a non-deterring bracket end");
  }
  double in = extreme;  // deterring side
  double out = 0.5;
  while (std::abs(in - out) > tol) {
    const double mid = 0.5 * (in + out);
    (deters(mid) ? in : out) = mid;
  }
  res.bracket_lo = std::min(in, out);
  res.bracket_hi = std::max(in, out);
  res.mu_bar = 0.5 * (in + out);

  constexpr int kChecks = 6;
  for (int k = 1; k <= kChecks; ++k) {
    const double f = static_cast<double>(k) / (kChecks + 1);
    const double a = in + f * (extreme - in);
    const double b = out + f * (0.5 - out);
    res.checked.push_back(a);
    res.checked.push_back(b);
    if (!deters(a) || deters(b)) {
      throw Error(fmt::format("non-monotone deterrence classification near mu_bar={} (probes {} / {})",
                              res.mu_bar, a, b));
    }
  }
  return res;
}

}  // namespace herd
