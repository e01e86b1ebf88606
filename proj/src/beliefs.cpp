#include "herd/beliefs.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

namespace herd {

const char* to_string(State s) { return s == State::Zero ? "0" : "1"; }

const char* to_string(Action a) {
  switch (a) {
    case Action::Buy0: return "buy0";
    case Action::Buy1: return "buy1";
    case Action::Exit: return "exit";
  }
  return "?";
}

const char* to_string(Regime r) { return r == Regime::Full ? "full" : "nonfull"; }

Action action_from_string(const std::string& s) {
  if (s == "buy0") return Action::Buy0;
  if (s == "buy1") return Action::Buy1;
  if (s == "exit") return Action::Exit;
  throw DomainError("unknown action '" + s + "'");
}

double posterior(double mu, double p) {
  if (mu < 0.0 || mu > 1.0 || p < 0.0 || p > 1.0) {
    throw DomainError(fmt::format("posterior: arguments out of [0,1] (mu={}, p={})", mu, p));
  }
  const double num = mu * p;
  const double den = num + (1.0 - mu) * (1.0 - p);
  if (den <= 0.0) {
    throw DomainError(fmt::format("posterior: 0/0 at mu={}, p={}", mu, p));
  }
  return num / den;
}

PosteriorBounds posterior_bounds(double mu, const SignalStructure& s) {
  return {posterior(mu, s.support_lo()), posterior(mu, s.support_hi())};
}

double llr(double x) {
  if (x <= 0.0) return -std::numeric_limits<double>::infinity();
  if (x >= 1.0) return std::numeric_limits<double>::infinity();
  return std::log(x) - std::log1p(-x);
}

double logistic(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

double llr_threshold(double mu, double tau0, double tau1, Regime regime) {
  const double q = regime == Regime::Full ? 0.5 * (1.0 + tau0 - tau1) : tau0;
  return llr(q) - llr(mu);
}

double ActionProbabilities::of(Action a) const {
  switch (a) {
    case Action::Buy0: return buy0;
    case Action::Buy1: return buy1;
    case Action::Exit: return exit;
  }
  return 0.0;
}

ActionProbabilities action_probabilities(State w, const DecisionCuts& cuts, Regime regime,
                                         const SignalStructure& s) {
  ActionProbabilities p;
  const double g0 = s.cdf(w, cuts.v0);
  p.buy0 = 1.0 - g0;
  if (regime == Regime::Full) {
    p.buy1 = g0;
    p.exit = 0.0;
  } else {
    p.buy1 = s.cdf(w, cuts.v1);
    p.exit = std::max(0.0, g0 - p.buy1);
  }
  return p;
}

ActionProbabilities action_probabilities(double mu, const DecisionCuts& cuts, Regime regime,
                                         const SignalStructure& s) {
  const auto a = action_probabilities(State::Zero, cuts, regime, s);
  const auto b = action_probabilities(State::One, cuts, regime, s);
  return {mu * a.buy0 + (1.0 - mu) * b.buy0, mu * a.buy1 + (1.0 - mu) * b.buy1,
          mu * a.exit + (1.0 - mu) * b.exit};
}

double update_after_action(double mu, const DecisionCuts& cuts, Regime regime, Action a,
                           const SignalStructure& s) {
  if (mu <= 0.0 || mu >= 1.0) return mu;
  const double l0 = action_probabilities(State::Zero, cuts, regime, s).of(a);
  const double l1 = action_probabilities(State::One, cuts, regime, s).of(a);
  if (l0 <= 0.0 && l1 <= 0.0) {
    throw DomainError(fmt::format("cannot condition on zero-probability action {} at mu={}", to_string(a), mu));
  }
  if (l0 == l1) return mu;
  // posterior odds = prior odds * l0 / l1
  const double num = mu * l0;
  return num / (num + (1.0 - mu) * l1);
}

double deterrence_price_curve(double mu, const SignalStructure& s) {
  if (s.support_lo() <= 0.0) {
    throw DomainError("deterrence price undefined for structures with support_lo = 0");
  }
  return 2.0 * posterior(mu, s.support_lo()) - 1.0;
}

double deterrence_price_curve_firm1(double mu, const SignalStructure& s) {
  if (s.support_hi() >= 1.0) {
    throw DomainError("deterrence price undefined for structures with support_hi = 1");
  }
  return 1.0 - 2.0 * posterior(mu, s.support_hi());
}

double deterrence_slope_bound(const SignalStructure& s) {
  const double a = s.support_lo();
  if (a <= 0.0) throw DomainError("slope bound undefined for support_lo = 0");
  return 2.0 * (1.0 - a) / a;
}

}  // namespace herd
