#include "herd/farsighted.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "herd/beliefs.hpp"
#include "herd/stage_game.hpp"

namespace herd {

namespace {

double h_raw(double mu, double lo) { return 2.0 * posterior(mu, lo) - 1.0; }

void require_bounded_lo(const SignalStructure& s) {
  if (s.support_lo() <= 0.0) throw DomainError("farsighted analysis needs support_lo > 0");
}

}  // namespace

DeviationBreakdown deviation_breakdown(double mu, double tau, const SignalStructure& s, const FarsightedConfig& cfg) {
  require_bounded_lo(s);
  if (!(mu > 0.0 && mu < 1.0)) throw DomainError(fmt::format("deviation_gain: mu={} not interior", mu));
  if (!(cfg.delta >= 0.0 && cfg.delta < 1.0)) throw DomainError("deviation_gain: delta must lie in [0, 1)");
  const double lo = s.support_lo();
  DeviationBreakdown d;
  d.tau = tau;
  d.v = decision_cuts(mu, {tau, 0.0}).cuts.v0;
  const double g0 = s.cdf(State::Zero, d.v);
  const double g1 = s.cdf(State::One, d.v);
  const double g = mu * g0 + (1.0 - mu) * g1;
  d.sale_prob = 1.0 - g;
  d.mu_sale = d.sale_prob > 0.0 ? mu * (1.0 - g0) / d.sale_prob : mu;
  d.mu_no_sale = g > 0.0 ? mu * g0 / g : mu;
  d.h = h_raw(mu, lo);
  d.h_sale = h_raw(d.mu_sale, lo);
  d.h_no_sale = h_raw(d.mu_no_sale, lo);
  // Written as differences from h so a certain sale at tau = h gives 0.
  const double today = d.sale_prob * tau - d.h;
  const double later = d.sale_prob * (d.h_sale - d.h) + g * (d.h_no_sale - d.h);
  d.gain = (1.0 - cfg.delta) * today + cfg.delta * later;
  return d;
}

double deviation_gain(double mu, double tau, const SignalStructure& s, const FarsightedConfig& cfg) {
  return deviation_breakdown(mu, tau, s, cfg).gain;
}

PosteriorJumps posterior_jumps(double mu, double v, const SignalStructure& s) {
  const double g0 = s.cdf(State::Zero, v);
  const double g1 = s.cdf(State::One, v);
  const double g = mu * g0 + (1.0 - mu) * g1;
  const double num = mu * (1.0 - mu) * (g1 - g0);
  return {g < 1.0 ? num / (1.0 - g) : 0.0, g > 0.0 ? num / g : 0.0};
}

bool sufficient_condition(double mu, double tau, const SignalStructure& s, const FarsightedConfig& cfg) {
  const auto d = deviation_breakdown(mu, tau, s, cfg);
  const double g0 = s.cdf(State::Zero, d.v);
  const double g1 = s.cdf(State::One, d.v);
  const double lhs = (1.0 - cfg.delta) * (d.h - d.sale_prob * tau);
  const double rhs = cfg.delta * deterrence_slope_bound(s) * mu * (1.0 - mu) * (g1 - g0);
  return lhs >= rhs;
}

DeviationScan scan_deviations(double mu, const SignalStructure& s, const FarsightedConfig& cfg) {
  DeviationScan r;
  r.mu = mu;
  const auto grid = price_grid_firm0(mu, s, cfg.grid);
  r.max_gain = -std::numeric_limits<double>::infinity();
  for (double t : grid) {
    const double g = deviation_gain(mu, t, s, cfg);
    if (g > r.max_gain) {
      r.max_gain = g;
      r.argmax_tau = t;
    }
  }
  // A gain that is zero at h and rises just above it hides between grid
  // points when mu is close to the threshold.
  const double h = std::max(0.0, grid.front());
  const double eta = 1e-6 * std::max(1e-3, 1.0 - h);
  r.slope_at_h = (deviation_gain(mu, h + eta, s, cfg) - deviation_gain(mu, h, s, cfg)) / eta;
  r.sustained = r.max_gain <= 1e-12 && r.slope_at_h <= 0.0;
  return r;
}

MuPrimeResult find_mu_prime(const SignalStructure& s, const FarsightedConfig& cfg, double tol, double edge) {
  if (s.unbounded() || s.support_lo() <= 0.0) {
    throw DomainError("find_mu_prime: structure must be bounded at the lower end");
  }
  const auto cls = classify(s);
  if (cls.kind != SignalKind::BoundedNonVanishing || cls.vanishing_at_lo()) {
    throw DomainError(fmt::format("find_mu_prime: densities vanish at the lower end ({})", to_string(cls.kind)));
  }
  MuPrimeResult res;
  auto holds = [&](double mu) {
    ++res.scans;
    return scan_deviations(mu, s, cfg).sustained;
  };
  const double top = 1.0 - edge;
  if (!holds(top)) {
    throw Error(fmt::format("a one-shot deviation still pays at mu={} (delta={})", top, cfg.delta));
  }
  // Below mu = 1 - lo the deterrence price is negative.
  double out = std::max(0.5, 1.0 - s.support_lo());
  if (holds(out)) {
    res.mu_prime = out;
    res.bracket_lo = res.bracket_hi = out;
    return res;
  }
  double in = top;
  while (in - out > tol) {
    const double mid = 0.5 * (in + out);
    (holds(mid) ? in : out) = mid;
  }
  res.bracket_lo = out;
  res.bracket_hi = in;
  res.mu_prime = in;
  for (int k = 1; k <= 6; ++k) {
    const double mu = in + (top - in) * static_cast<double>(k) / 7.0;
    res.checked.push_back(mu);
    if (!holds(mu)) throw Error(fmt::format("deviation check not monotone above mu'={} (fails at {})", in, mu));
  }
  return res;
}

TrajectoryRecord simulate_frozen_profile(const SignalStructure& s, double mu0, double mu_prime, std::size_t t_max,
                                         std::uint64_t seed, std::optional<State> state) {
  require_bounded_lo(s);
  if (mu0 < mu_prime) throw DomainError(fmt::format("mu0={} lies below mu'={}", mu0, mu_prime));
  if (!(mu0 < 1.0)) throw DomainError("mu0 must be below 1");
  auto rng = run_engine(seed, 0);
  TrajectoryRecord tr;
  tr.mu0 = mu0;
  tr.state = state ? *state : (unit_uniform(rng) < mu0 ? State::Zero : State::One);
  tr.deterrence_onset = 0;
  double mu = mu0;
  for (std::size_t t = 0; t < t_max; ++t) {
    const PriceVector tau{std::max(0.0, deterrence_price_curve(mu, s)), 0.0};
    const auto c = decision_cuts(mu, tau);
    Step st;
    st.t = t;
    st.mu = mu;
    st.tau = tau;
    st.cuts = c.cuts;
    st.frozen = true;
    st.action = decision(posterior(mu, sample_belief(s, tr.state, rng)), tau, mu);
    st.mu_next = update_after_action(mu, c.cuts, c.regime, st.action, s);
    if (st.action != Action::Buy0 || st.mu_next != mu) {
      throw Error(fmt::format("deterrence profile broke at t={} (action {}, mu {} -> {})", t, to_string(st.action), mu,
                              st.mu_next));
    }
    tr.steps.push_back(st);
  }
  tr.stop = StopReason::Deterrence;
  tr.terminal_mu = mu;
  tr.outcome = Outcome::HerdOnFirm0;
  return tr;
}

}  // namespace herd
