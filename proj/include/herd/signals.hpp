#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "herd/types.hpp"

namespace herd {

enum class Family { UniformBelief, Tent, PowerEndpoint, BetaUnbounded, Custom };

const char* to_string(Family f);
Family family_from_string(const std::string& s);

struct FamilyParams {
  double lo = 0.3;
  double hi = 0.7;
  double kappa = 1.0;  // PowerEndpoint exponent
  std::size_t knots = 4096;
  // Custom only: tabulated mixture density (x, m(x)), strictly increasing x.
  std::vector<std::pair<double, double>> table;
};

/// Reads a two-column (x, m(x)) text table. Blank lines and '#' comments are
/// skipped.
std::vector<std::pair<double, double>> read_density_table(const std::string& path);

/// A signal structure represented by the density m of the private belief p(s)
/// under the half-half state mixture. The state-conditional densities follow
/// as g0(x) = 2x m(x) and g1(x) = 2(1-x) m(x).
///
/// Immutable after construction; safe to share between threads.
class SignalStructure {
 public:
  using Density = std::function<double(double)>;

  /// Builds one of the built-in families (or Custom from params.table).
  static SignalStructure make(Family family, const FamilyParams& params);

  /// Wraps an arbitrary density on [lo, hi] without normalising it. Used for
  /// custom structures and for exercising validate() on broken inputs.
  /// `breakpoints` lists interior points where m is not smooth.
  static SignalStructure from_density(double lo, double hi, Density m,
                                      std::vector<double> breakpoints = {},
                                      std::size_t knots = 4096,
                                      Family tag = Family::Custom);

  Family family() const { return family_; }
  double kappa() const { return kappa_; }
  std::string describe() const;

  double support_lo() const { return lo_; }
  double support_hi() const { return hi_; }
  bool unbounded() const { return lo_ <= 0.0 && hi_ >= 1.0; }

  /// Points in (lo, hi) where m has a kink; quadrature splits there.
  const std::vector<double>& breakpoints() const { return breaks_; }

  double mixture_density(double x) const;
  double density(State w, double x) const;

  /// G_w(x) = P(p(s) < x | w): cubic Hermite interpolation of the CDF table
  /// with the densities as slopes, limited to keep it monotone.
  double cdf(State w, double x) const;
  /// mu G0(x) + (1 - mu) G1(x).
  double cdf_mix(double mu, double x) const;
  /// Inverse of G_w on the table; u in [0, 1].
  double quantile(State w, double u) const;

  std::size_t knots() const { return xs_.size(); }

 private:
  double table_cdf(State w, std::size_t k, double x) const;
  SignalStructure() = default;
  void build_tables(std::size_t knots);

  Family family_ = Family::Custom;
  double kappa_ = 0.0;
  double lo_ = 0.0;
  double hi_ = 1.0;
  Density m_;
  std::vector<double> breaks_;
  std::vector<double> xs_;
  std::vector<double> cdf0_;
  // CDF slopes at the knots (the normalised state densities).
  std::vector<double> dcdf0_;
  std::vector<double> dcdf1_;
  std::vector<double> cdf1_;
};

struct ValidationCheck {
  std::string name;
  double residual = 0.0;
  bool passed = false;
};

struct ValidationReport {
  std::vector<ValidationCheck> checks;
  bool passed() const;
  const ValidationCheck* find(const std::string& name) const;
};

/// Quadrature-based checks of the structure's defining identities. Never
/// throws on a bad structure; failures are reported.
ValidationReport validate(const SignalStructure& s, double tol = 1e-8);

enum class SignalKind { Unbounded, BoundedVanishing, BoundedNonVanishing };
const char* to_string(SignalKind k);

struct SignalClass {
  SignalKind kind = SignalKind::BoundedNonVanishing;
  // Endpoint densities; for Custom structures these are the one-sided
  // difference quotients of the CDFs.
  double g0_lo = 0.0;
  double g1_lo = 0.0;
  double g0_hi = 0.0;
  double g1_hi = 0.0;
  // Custom only: true when a one-sided limit estimate did not settle.
  bool unstable = false;
  std::string note;

  bool vanishing_at_lo() const { return g0_lo == 0.0 && g1_lo == 0.0; }
  bool vanishing_at_hi() const { return g0_hi == 0.0 && g1_hi == 0.0; }
};

SignalClass classify(const SignalStructure& s);

/// Uniform double in [0, 1) from the top 53 bits of the engine output; used
/// instead of std::uniform_real_distribution so draws are portable.
inline double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Draws p(s) from G_w by inverse-CDF lookup.
double sample_belief(const SignalStructure& s, State w, std::mt19937_64& rng);

/// G1(r) / G0(r); r must lie strictly above the support's lower end.
double lr_ratio(const SignalStructure& s, double r);

}  // namespace herd
