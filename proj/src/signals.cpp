#include "herd/signals.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <fmt/format.h>

namespace herd {

namespace {

// Cuts within this distance of a support end are treated as lying on it, so
// a sale that is certain in exact arithmetic stays certain after rounding.
constexpr double kSnap = 1e-13;

std::string normalise_tag(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '_' || c == '-' || c == ' ') continue;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

template <class F>
double integrate(F f, double a, double b) {
  if (b <= a) return 0.0;
  return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 15, 1e-14);
}

// Integral of f over [a, b] split at the structure's kinks.
template <class F>
double integrate_split(F f, double a, double b, const std::vector<double>& breaks) {
  double total = 0.0;
  double left = a;
  for (double x : breaks) {
    if (x <= left || x >= b) continue;
    total += integrate(f, left, x);
    left = x;
  }
  return total + integrate(f, left, b);
}

double interpolate(const std::vector<double>& xs, const std::vector<double>& ys, double x) {
  auto it = std::upper_bound(xs.begin(), xs.end(), x);
  if (it == xs.begin()) return ys.front();
  if (it == xs.end()) return ys.back();
  const std::size_t k = static_cast<std::size_t>(it - xs.begin()) - 1;
  const double t = (x - xs[k]) / (xs[k + 1] - xs[k]);
  return ys[k] + t * (ys[k + 1] - ys[k]);
}

// Hermite basis on one interval; slopes above three secants are clipped so
// the cubic stays monotone.
double hermite(double x0, double x1, double y0, double y1, double d0, double d1, double x) {
  const double h = x1 - x0;
  const double sec = (y1 - y0) / h;
  d0 = std::min(d0, 3.0 * sec);
  d1 = std::min(d1, 3.0 * sec);
  const double t = (x - x0) / h;
  const double t2 = t * t;
  const double t3 = t2 * t;
  return (2 * t3 - 3 * t2 + 1) * y0 + (t3 - 2 * t2 + t) * h * d0 + (-2 * t3 + 3 * t2) * y1 + (t3 - t2) * h * d1;
}

}  // namespace

const char* to_string(Family f) {
  switch (f) {
    case Family::UniformBelief: return "UniformBelief";
    case Family::Tent: return "Tent";
    case Family::PowerEndpoint: return "PowerEndpoint";
    case Family::BetaUnbounded: return "BetaUnbounded";
    case Family::Custom: return "Custom";
  }
  return "?";
}

Family family_from_string(const std::string& s) {
  const std::string t = normalise_tag(s);
  if (t == "uniformbelief" || t == "uniform") return Family::UniformBelief;
  if (t == "tent") return Family::Tent;
  if (t == "powerendpoint" || t == "power") return Family::PowerEndpoint;
  if (t == "betaunbounded" || t == "beta") return Family::BetaUnbounded;
  if (t == "custom") return Family::Custom;
  throw DomainError("unknown signal family '" + s + "'");
}

const char* to_string(SignalKind k) {
  switch (k) {
    case SignalKind::Unbounded: return "Unbounded";
    case SignalKind::BoundedVanishing: return "BoundedVanishing";
    case SignalKind::BoundedNonVanishing: return "BoundedNonVanishing";
  }
  return "?";
}

std::vector<std::pair<double, double>> read_density_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot open density table '" + path + "'");
  std::vector<std::pair<double, double>> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    double x = 0.0;
    double m = 0.0;
    if (!(ls >> x)) continue;
    if (!(ls >> m)) throw DomainError(fmt::format("{}:{}: expected two columns", path, lineno));
    rows.emplace_back(x, m);
  }
  return rows;
}

SignalStructure SignalStructure::from_density(double lo, double hi, Density m,
                                              std::vector<double> breakpoints,
                                              std::size_t knots, Family tag) {
  if (!(lo >= 0.0 && lo < hi && hi <= 1.0)) {
    throw DomainError(fmt::format("invalid support [{}, {}]: need 0 <= lo < hi <= 1", lo, hi));
  }
  if (knots < 2) throw DomainError("CDF tables need at least 2 knots");
  SignalStructure s;
  s.family_ = tag;
  s.lo_ = lo;
  s.hi_ = hi;
  s.m_ = std::move(m);
  std::sort(breakpoints.begin(), breakpoints.end());
  for (double b : breakpoints) {
    if (b > lo && b < hi) s.breaks_.push_back(b);
  }
  s.build_tables(knots);
  return s;
}

SignalStructure SignalStructure::make(Family family, const FamilyParams& p) {
  if (family == Family::BetaUnbounded) {
    auto s = from_density(
        0.0, 1.0, [](double x) { return (x < 0.0 || x > 1.0) ? 0.0 : 6.0 * x * (1.0 - x); }, {},
        p.knots, family);
    return s;
  }
  if (family == Family::Custom) {
    const auto& t = p.table;
    if (t.size() < 2) throw DomainError("custom density table needs at least two rows");
    std::vector<double> xs;
    std::vector<double> ms;
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (i > 0 && !(t[i].first > t[i - 1].first)) {
        throw DomainError(fmt::format("custom density table: x not strictly increasing at row {}", i + 1));
      }
      if (t[i].second < 0.0) throw DomainError("custom density table: negative density");
      xs.push_back(t[i].first);
      ms.push_back(t[i].second);
    }
    const double lo = xs.front();
    const double hi = xs.back();
    std::vector<double> breaks(xs.begin() + 1, xs.end() - 1);
    return from_density(
        lo, hi,
        [xs, ms](double x) {
          if (x < xs.front() || x > xs.back()) return 0.0;
          return interpolate(xs, ms, x);
        },
        std::move(breaks), p.knots, family);
  }

  const double lo = p.lo;
  const double hi = p.hi;
  if (!(lo >= 0.0 && lo < hi && hi <= 1.0)) {
    throw DomainError(fmt::format("invalid support [{}, {}]: need 0 <= lo < hi <= 1", lo, hi));
  }
  if (std::abs(lo + hi - 1.0) > 1e-12) {
    throw DomainError(fmt::format("built-in families need lo + hi = 1 (got {} + {})", lo, hi));
  }
  const double width = hi - lo;
  switch (family) {
    case Family::UniformBelief: {
      const double height = 1.0 / width;
      return from_density(
          lo, hi, [=](double x) { return (x < lo || x > hi) ? 0.0 : height; }, {}, p.knots, family);
    }
    case Family::Tent: {
      const double mid = 0.5 * (lo + hi);
      const double peak = 2.0 / width;
      const double slope = peak / (0.5 * width);
      return from_density(
          lo, hi,
          [=](double x) {
            if (x <= lo || x >= hi) return 0.0;
            return slope * std::min(x - lo, hi - x);
          },
          {mid}, p.knots, family);
    }
    case Family::PowerEndpoint: {
      if (p.kappa < 0.0) throw DomainError("PowerEndpoint needs kappa >= 0");
      const double k = p.kappa;
      // integral of ((x-lo)(hi-x))^k over the support
      const double norm = std::pow(width, 2.0 * k + 1.0) * std::beta(k + 1.0, k + 1.0);
      auto s = from_density(
          lo, hi,
          [=](double x) {
            if (x < lo || x > hi) return 0.0;
            if (k == 0.0) return 1.0 / norm;
            return std::pow((x - lo) * (hi - x), k) / norm;
          },
          {}, p.knots, family);
      s.kappa_ = k;
      return s;
    }
    default:
      break;
  }
  throw DomainError("unsupported family");
}

void SignalStructure::build_tables(std::size_t knots) {
  xs_.clear();
  xs_.reserve(knots + breaks_.size());
  for (std::size_t i = 0; i < knots; ++i) {
    xs_.push_back(lo_ + (hi_ - lo_) * static_cast<double>(i) / static_cast<double>(knots - 1));
  }
  xs_.back() = hi_;
  xs_.insert(xs_.end(), breaks_.begin(), breaks_.end());
  std::sort(xs_.begin(), xs_.end());
  xs_.erase(std::unique(xs_.begin(), xs_.end(),
                        [](double a, double b) { return std::abs(a - b) < 1e-15; }),
            xs_.end());

  using Gauss = boost::math::quadrature::gauss<double, 10>;
  cdf0_.assign(xs_.size(), 0.0);
  cdf1_.assign(xs_.size(), 0.0);
  for (std::size_t i = 1; i < xs_.size(); ++i) {
    const double a = xs_[i - 1];
    const double b = xs_[i];
    cdf0_[i] = cdf0_[i - 1] + Gauss::integrate([&](double x) { return 2.0 * x * m_(x); }, a, b);
    cdf1_[i] = cdf1_[i - 1] + Gauss::integrate([&](double x) { return 2.0 * (1.0 - x) * m_(x); }, a, b);
  }
  const double t0 = cdf0_.back();
  const double t1 = cdf1_.back();
  for (std::size_t i = 0; i < xs_.size(); ++i) {
    if (t0 > 0.0) cdf0_[i] /= t0;
    if (t1 > 0.0) cdf1_[i] /= t1;
  }
  cdf0_.back() = 1.0;
  cdf1_.back() = 1.0;
  dcdf0_.assign(xs_.size(), 0.0);
  dcdf1_.assign(xs_.size(), 0.0);
  for (std::size_t i = 0; i < xs_.size(); ++i) {
    // One-sided at the ends: the density may jump to 0 outside the support.
    const double x = i == 0 ? xs_[0] + 1e-12 * (hi_ - lo_) : (i + 1 == xs_.size() ? xs_[i] - 1e-12 * (hi_ - lo_) : xs_[i]);
    const double m = m_(x);
    if (t0 > 0.0) dcdf0_[i] = std::max(0.0, 2.0 * xs_[i] * m / t0);
    if (t1 > 0.0) dcdf1_[i] = std::max(0.0, 2.0 * (1.0 - xs_[i]) * m / t1);
  }
}

double SignalStructure::table_cdf(State w, std::size_t k, double x) const {
  const auto& c = w == State::Zero ? cdf0_ : cdf1_;
  const auto& d = w == State::Zero ? dcdf0_ : dcdf1_;
  if (!(c[k + 1] > c[k])) return c[k];
  return hermite(xs_[k], xs_[k + 1], c[k], c[k + 1], d[k], d[k + 1], x);
}

std::string SignalStructure::describe() const {
  switch (family_) {
    case Family::BetaUnbounded: return "BetaUnbounded";
    case Family::PowerEndpoint: return fmt::format("PowerEndpoint({},{},k={})", lo_, hi_, kappa_);
    default: return fmt::format("{}({},{})", to_string(family_), lo_, hi_);
  }
}

double SignalStructure::mixture_density(double x) const { return m_(x); }

double SignalStructure::density(State w, double x) const {
  const double m = m_(x);
  return w == State::Zero ? 2.0 * x * m : 2.0 * (1.0 - x) * m;
}

double SignalStructure::cdf(State w, double x) const {
  if (x <= lo_ + kSnap) return 0.0;
  if (x >= hi_ - kSnap) return 1.0;
  auto it = std::upper_bound(xs_.begin(), xs_.end(), x);
  if (it == xs_.begin()) return 0.0;
  if (it == xs_.end()) return 1.0;
  return table_cdf(w, static_cast<std::size_t>(it - xs_.begin()) - 1, x);
}

double SignalStructure::cdf_mix(double mu, double x) const {
  return mu * cdf(State::Zero, x) + (1.0 - mu) * cdf(State::One, x);
}

double SignalStructure::quantile(State w, double u) const {
  const auto& c = w == State::Zero ? cdf0_ : cdf1_;
  if (u <= 0.0) return lo_;
  if (u >= 1.0) return hi_;
  auto it = std::upper_bound(c.begin(), c.end(), u);
  if (it == c.end()) return hi_;
  const std::size_t k = static_cast<std::size_t>(it - c.begin()) - 1;
  const double span = c[k + 1] - c[k];
  if (span <= 0.0) return xs_[k];
  // Bisection on the monotone cubic of interval k.
  double a = xs_[k];
  double b = xs_[k + 1];
  for (int i = 0; i < 60 && b - a > 1e-16; ++i) {
    const double mid = 0.5 * (a + b);
    (table_cdf(w, k, mid) < u ? a : b) = mid;
  }
  return 0.5 * (a + b);
}

bool ValidationReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
}

const ValidationCheck* ValidationReport::find(const std::string& name) const {
  for (const auto& c : checks) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

ValidationReport validate(const SignalStructure& s, double tol) {
  ValidationReport r;
  const double lo = s.support_lo();
  const double hi = s.support_hi();
  const auto& br = s.breakpoints();
  auto add = [&](std::string name, double residual) {
    const bool ok = std::isfinite(residual) && residual < tol;
    r.checks.push_back({std::move(name), residual, ok});
  };

  add("support", (lo >= 0.0 && lo < hi && hi <= 1.0) ? 0.0 : 1.0);
  auto m = [&](double x) { return s.mixture_density(x); };
  add("mass", std::abs(integrate_split(m, lo, hi, br) - 1.0));
  add("mean", std::abs(integrate_split([&](double x) { return x * m(x); }, lo, hi, br) - 0.5));
  add("g0_mass", std::abs(integrate_split([&](double x) { return s.density(State::Zero, x); }, lo, hi, br) - 1.0));
  add("g1_mass", std::abs(integrate_split([&](double x) { return s.density(State::One, x); }, lo, hi, br) - 1.0));

  constexpr int kGrid = 1000;
  double consistency = 0.0;
  double negativity = 0.0;
  double dominance = 0.0;
  for (int i = 0; i <= kGrid; ++i) {
    const double x = lo + (hi - lo) * i / kGrid;
    consistency = std::max(consistency,
                           std::abs(s.density(State::Zero, x) * (1.0 - x) - s.density(State::One, x) * x));
    negativity = std::max(negativity, -m(x));
    dominance = std::max(dominance, s.cdf(State::Zero, x) - s.cdf(State::One, x));
  }
  add("consistency", consistency);
  add("nonnegative", std::max(0.0, negativity));
  add("dominance", std::max(0.0, dominance));
  return r;
}

namespace {

struct EndpointEstimate {
  double value = 0.0;
  bool stable = true;
};

// One-sided limit of a difference quotient q(w) as w -> 0+, probed on
// w = 2^-k for k = 6..16 with Richardson extrapolation against a linear term.
EndpointEstimate endpoint_limit(const std::function<double(double)>& q, double max_window) {
  std::vector<double> qs;
  std::vector<double> ext;
  for (int k = 6; k <= 16; ++k) {
    const double w = std::min(std::ldexp(1.0, -k), max_window / std::ldexp(1.0, k - 6));
    qs.push_back(q(w));
  }
  for (std::size_t i = 1; i < qs.size(); ++i) ext.push_back(2.0 * qs[i] - qs[i - 1]);

  bool decreasing = true;
  for (std::size_t i = 1; i < qs.size(); ++i) {
    if (qs[i] > qs[i - 1] * (1.0 + 1e-9) + 1e-15) decreasing = false;
  }
  constexpr double kZero = 1e-4;
  if (decreasing && (qs.back() < kZero || std::abs(ext.back()) < kZero)) return {0.0, true};

  const double a = ext[ext.size() - 1];
  const double b = ext[ext.size() - 2];
  const bool settled = std::abs(a - b) <= 1e-3 * std::max(1.0, std::abs(a));
  return {std::max(0.0, a), settled};
}

}  // namespace

SignalClass classify(const SignalStructure& s) {
  SignalClass c;
  const double lo = s.support_lo();
  const double hi = s.support_hi();

  if (s.family() != Family::Custom) {
    c.g0_lo = s.density(State::Zero, lo);
    c.g1_lo = s.density(State::One, lo);
    c.g0_hi = s.density(State::Zero, hi);
    c.g1_hi = s.density(State::One, hi);
  } else {
    // Exact CDF increments by quadrature; the interpolation tables are too
    // coarse for windows below the knot spacing.
    const auto& br = s.breakpoints();
    auto mass = [&](State w, double a, double b) {
      return integrate_split([&](double x) { return s.density(w, x); }, a, b, br);
    };
    const double width = hi - lo;
    const double window = 0.5 * width;
    auto est = [&](State w, bool at_lo) {
      return endpoint_limit(
          [&, w, at_lo](double d) { return (at_lo ? mass(w, lo, lo + d) : mass(w, hi - d, hi)) / d; },
          window);
    };
    const auto e0l = est(State::Zero, true);
    const auto e1l = est(State::One, true);
    const auto e0h = est(State::Zero, false);
    const auto e1h = est(State::One, false);
    c.g0_lo = e0l.value;
    c.g1_lo = e1l.value;
    c.g0_hi = e0h.value;
    c.g1_hi = e1h.value;
    c.unstable = !(e0l.stable && e1l.stable && e0h.stable && e1h.stable);
    if (c.unstable) c.note = "one-sided endpoint quotient did not stabilise";
  }

  if (s.unbounded()) {
    c.kind = SignalKind::Unbounded;
  } else if (c.vanishing_at_lo() && c.vanishing_at_hi()) {
    c.kind = SignalKind::BoundedVanishing;
  } else {
    c.kind = SignalKind::BoundedNonVanishing;
  }
  return c;
}

double sample_belief(const SignalStructure& s, State w, std::mt19937_64& rng) {
  return s.quantile(w, unit_uniform(rng));
}

double lr_ratio(const SignalStructure& s, double r) {
  if (!(r > s.support_lo())) {
    throw DomainError(fmt::format("lr_ratio undefined at r = {} <= support_lo = {}", r, s.support_lo()));
  }
  if (r >= s.support_hi()) return 1.0;
  const double g0 = s.cdf(State::Zero, r);
  if (g0 <= 0.0) {
    throw DomainError(fmt::format("lr_ratio: G0({}) underflows to zero", r));
  }
  return s.cdf(State::One, r) / g0;
}

}  // namespace herd
