#pragma once

// Reference computations for the stage game built from the consumer rule
// alone: the cut points are located by bisection on decision() instead of the
// closed-form inversion used by the library.

#include <algorithm>
#include <cmath>

#include "herd/beliefs.hpp"
#include "herd/stage_game.hpp"

namespace oracle {

// Smallest private belief at which the consumer picks action `a`, given the
// choice is monotone in the private belief (Buy0 from above, Buy1 from below).
inline double bisect_cut(double mu, const herd::PriceVector& tau, herd::Action a) {
  auto takes = [&](double x) { return herd::decision(herd::posterior(mu, x), tau, mu) == a; };
  double lo = 0.0, hi = 1.0;
  if (a == herd::Action::Buy0) {
    if (takes(0.0)) return 0.0;
    if (!takes(1.0)) return 1.0;
    for (int k = 0; k < 200 && hi - lo > 1e-15; ++k) {
      const double m = 0.5 * (lo + hi);
      (takes(m) ? hi : lo) = m;
    }
    return hi;
  }
  if (takes(1.0)) return 1.0;
  if (!takes(0.0)) return 0.0;
  for (int k = 0; k < 200 && hi - lo > 1e-15; ++k) {
    const double m = 0.5 * (lo + hi);
    (takes(m) ? lo : hi) = m;
  }
  return lo;
}

inline herd::Payoffs payoffs(double mu, const herd::PriceVector& tau, const herd::SignalStructure& s) {
  const double v0 = bisect_cut(mu, tau, herd::Action::Buy0);
  const double v1 = bisect_cut(mu, tau, herd::Action::Buy1);
  const double sale0 = 1.0 - s.cdf_mix(mu, v0);
  const double sale1 = s.cdf_mix(mu, v1);
  return {sale0 * tau.tau0, sale1 * tau.tau1};
}

struct BruteRegret {
  double firm0 = 0.0;
  double firm1 = 0.0;
  double max() const { return std::max(firm0, firm1); }
};

// Full scan of unilateral deviations over each firm's grid.
inline BruteRegret regret(const herd::StageEquilibrium& eq, const herd::SignalStructure& s) {
  const auto& g0 = eq.phi0.grid;
  const auto& g1 = eq.phi1.grid;
  const auto& w0 = eq.phi0.weights;
  const auto& w1 = eq.phi1.weights;
  std::vector<std::vector<herd::Payoffs>> P(g0.size(), std::vector<herd::Payoffs>(g1.size()));
  for (std::size_t i = 0; i < g0.size(); ++i)
    for (std::size_t j = 0; j < g1.size(); ++j) P[i][j] = oracle::payoffs(eq.mu, {g0[i], g1[j]}, s);
  double v0 = 0, v1 = 0;
  for (std::size_t i = 0; i < g0.size(); ++i)
    for (std::size_t j = 0; j < g1.size(); ++j) {
      v0 += w0[i] * w1[j] * P[i][j].firm0;
      v1 += w0[i] * w1[j] * P[i][j].firm1;
    }
  BruteRegret r;
  for (std::size_t i = 0; i < g0.size(); ++i) {
    double u = 0;
    for (std::size_t j = 0; j < g1.size(); ++j) u += w1[j] * P[i][j].firm0;
    r.firm0 = std::max(r.firm0, u - v0);
  }
  for (std::size_t j = 0; j < g1.size(); ++j) {
    double u = 0;
    for (std::size_t i = 0; i < g0.size(); ++i) u += w0[i] * P[i][j].firm1;
    r.firm1 = std::max(r.firm1, u - v1);
  }
  return r;
}

}  // namespace oracle
