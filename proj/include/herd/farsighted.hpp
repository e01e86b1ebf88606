#pragma once

// One-shot deviation analysis for firms that discount future revenue, around
// the profile in which firm 0 always charges the deterrence price.

#include <cstddef>
#include <optional>
#include <vector>

#include "herd/dynamics.hpp"
#include "herd/signals.hpp"

namespace herd {

struct FarsightedConfig {
  double delta = 0.5;
  std::size_t grid = 201;
};

/// Terms of a one-period deviation by firm 0 to price tau (firm 1 at 0),
/// followed by a return to the deterrence profile at the updated belief.
struct DeviationBreakdown {
  double tau = 0.0;
  double v = 0.0;           // cut v_mu(tau, 0)
  double sale_prob = 0.0;   // 1 - G_mu(v)
  double mu_sale = 0.0;     // belief after a sale by firm 0
  double mu_no_sale = 0.0;  // belief after no sale
  double h = 0.0;           // deterrence price at mu (not clamped)
  double h_sale = 0.0;
  double h_no_sale = 0.0;
  double gain = 0.0;        // deviation value minus h
};

DeviationBreakdown deviation_breakdown(double mu, double tau, const SignalStructure& s, const FarsightedConfig& cfg);
double deviation_gain(double mu, double tau, const SignalStructure& s, const FarsightedConfig& cfg);

/// mu(1 - mu)(G1(v) - G0(v)) divided by (1 - G_mu(v)) and by G_mu(v): the
/// belief jumps after a sale and after no sale.
struct PosteriorJumps {
  double up = 0.0;
  double down = 0.0;
};
PosteriorJumps posterior_jumps(double mu, double v, const SignalStructure& s);

/// Sufficient condition for a non-positive gain, obtained by bounding the
/// continuation with the slope bound of h:
/// (1 - delta)[h - (1 - G)tau] >= delta C mu(1 - mu)(G1 - G0).
bool sufficient_condition(double mu, double tau, const SignalStructure& s, const FarsightedConfig& cfg);

struct DeviationScan {
  double mu = 0.0;
  double max_gain = 0.0;
  double argmax_tau = 0.0;
  // One-sided slope of the gain just above the deterrence price.
  double slope_at_h = 0.0;
  bool sustained = false;
};

/// Gain over firm 0's price grid at mu plus the slope check at h.
DeviationScan scan_deviations(double mu, const SignalStructure& s, const FarsightedConfig& cfg);

struct MuPrimeResult {
  double mu_prime = 0.0;
  double bracket_lo = 0.0;
  double bracket_hi = 0.0;
  std::size_t scans = 0;
  std::vector<double> checked;
};

/// Smallest mu (to within tol) above which no one-shot deviation from the
/// deterrence profile pays. Throws DomainError for unbounded structures or
/// structures with vanishing densities at the lower end, and Error when the
/// deviation still pays at 1 - edge or the scan is not monotone.
MuPrimeResult find_mu_prime(const SignalStructure& s, const FarsightedConfig& cfg, double tol = 1e-4,
                            double edge = 1e-3);

/// Plays the deterrence profile from mu0 for t_max periods. Throws
/// DomainError if mu0 < mu_prime and Error if the belief ever moves or firm 1
/// sells.
TrajectoryRecord simulate_frozen_profile(const SignalStructure& s, double mu0, double mu_prime, std::size_t t_max,
                                         std::uint64_t seed, std::optional<State> state = std::nullopt);

}  // namespace herd
