#pragma once

#include "herd/signals.hpp"
#include "herd/types.hpp"

namespace herd {

/// Public belief: probability that the state is 0 given the public history.
/// The vertices 0 and 1 are absorbing.
struct PublicBelief {
  double mu = 0.5;
};

/// Support of the consumer's posterior p_mu(s) at prior mu.
struct PosteriorBounds {
  double lo = 0.0;
  double hi = 1.0;
};

/// Bayes posterior on state 0 from prior mu and private belief p.
/// Throws DomainError on the 0/0 cases (mu and p at opposite vertices).
double posterior(double mu, double p);

PosteriorBounds posterior_bounds(double mu, const SignalStructure& s);

/// log(x / (1 - x)); returns -inf / +inf at x = 0 / 1.
double llr(double x);
double logistic(double v);

/// Log-likelihood-ratio form of the firm-0 cut: llr of the indifferent
/// consumer's posterior minus llr(mu). logistic() of it is the private-belief
/// cut v0.
double llr_threshold(double mu, double tau0, double tau1, Regime regime);

/// Probability of each action under state w given the cuts.
struct ActionProbabilities {
  double buy0 = 0.0;
  double buy1 = 0.0;
  double exit = 0.0;
  double of(Action a) const;
};

ActionProbabilities action_probabilities(State w, const DecisionCuts& cuts, Regime regime,
                                         const SignalStructure& s);

/// Mixture over states with weight mu on state 0.
ActionProbabilities action_probabilities(double mu, const DecisionCuts& cuts, Regime regime,
                                         const SignalStructure& s);

/// Public belief after observing action a, computed in odds form. Throws
/// DomainError if a has probability zero under both states.
double update_after_action(double mu, const DecisionCuts& cuts, Regime regime, Action a,
                           const SignalStructure& s);

/// h(mu) = 2 * posterior(mu, support_lo) - 1, the price at which firm 0 sells
/// with certainty even against a free rival. May be negative. Throws for
/// unbounded structures.
double deterrence_price_curve(double mu, const SignalStructure& s);

/// Upper bound 2(1 - lo)/lo on the slope of h.
double deterrence_slope_bound(const SignalStructure& s);

/// Mirror image for firm 1: 1 - 2 * posterior(mu, support_hi).
double deterrence_price_curve_firm1(double mu, const SignalStructure& s);

}  // namespace herd
