#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "herd/signals.hpp"

using namespace herd;

namespace {

SignalStructure uniform() { return SignalStructure::make(Family::UniformBelief, {}); }
SignalStructure tent() { return SignalStructure::make(Family::Tent, {}); }
SignalStructure beta() { return SignalStructure::make(Family::BetaUnbounded, {}); }

// Closed forms integrated by hand.
double uniform_g0(double x) { return 2.5 * (x * x - 0.09); }
double uniform_g1(double x) { return -2.5 * x * x + 5.0 * x - 1.275; }
double beta_g0(double x) { return 4 * x * x * x - 3 * x * x * x * x; }
double beta_g1(double x) { return 6 * x * x - 8 * x * x * x + 3 * x * x * x * x; }

// Tent(0.3, 0.7) state-0 CDF: g0 = 2x m(x), m rising as 25(x - 0.3) then
// falling as 25(0.7 - x).
double tent_g0(double x) {
  auto rise = [](double a, double b) { return 50.0 * ((b * b * b - a * a * a) / 3.0 - 0.15 * (b * b - a * a)); };
  auto fall = [](double a, double b) { return 50.0 * (0.35 * (b * b - a * a) - (b * b * b - a * a * a) / 3.0); };
  if (x <= 0.3) return 0.0;
  if (x <= 0.5) return rise(0.3, x);
  if (x <= 0.7) return rise(0.3, 0.5) + fall(0.5, x);
  return 1.0;
}

}  // namespace

TEST_CASE("uniform belief CDFs match the closed forms") {
  const auto s = uniform();
  CHECK(s.mixture_density(0.45) == doctest::Approx(2.5));
  for (double x = 0.3; x <= 0.7 + 1e-12; x += 0.01) {
    CHECK(s.cdf(State::Zero, x) == doctest::Approx(uniform_g0(x)).epsilon(1e-9));
    CHECK(s.cdf(State::One, x) == doctest::Approx(uniform_g1(x)).epsilon(1e-9));
  }
  CHECK(s.cdf(State::Zero, 0.7) == doctest::Approx(1.0));
  CHECK(s.cdf(State::One, 0.7) == doctest::Approx(1.0));
  CHECK(s.cdf(State::Zero, 0.1) == 0.0);
  CHECK(s.cdf(State::One, 0.9) == 1.0);
}

TEST_CASE("beta CDFs match the closed forms") {
  const auto s = beta();
  CHECK(s.mixture_density(0.25) == doctest::Approx(6 * 0.25 * 0.75));
  for (double x = 0.0; x <= 1.0; x += 0.02) {
    CHECK(std::abs(s.cdf(State::Zero, x) - beta_g0(x)) < 1e-9);
    CHECK(std::abs(s.cdf(State::One, x) - beta_g1(x)) < 1e-9);
  }
}

TEST_CASE("tent density and CDF") {
  const auto s = tent();
  CHECK(s.mixture_density(0.5) == doctest::Approx(5.0));
  CHECK(s.mixture_density(0.3) == doctest::Approx(0.0));
  CHECK(s.mixture_density(0.7) == doctest::Approx(0.0));
  for (double x = 0.3; x <= 0.7 + 1e-12; x += 0.0125) {
    CHECK(std::abs(s.cdf(State::Zero, x) - tent_g0(x)) < 1e-9);
  }
}

TEST_CASE("cdf_mix mixes the state CDFs") {
  const auto s = uniform();
  CHECK(s.cdf_mix(0.3, 0.5) == doctest::Approx(0.3 * uniform_g0(0.5) + 0.7 * uniform_g1(0.5)));
}

TEST_CASE("quantile inverts the CDF") {
  for (const auto& s : {uniform(), tent(), beta()}) {
    for (double u = 0.01; u < 1.0; u += 0.07) {
      for (State w : {State::Zero, State::One}) {
        CHECK(s.cdf(w, s.quantile(w, u)) == doctest::Approx(u).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("validation passes for built-in families and flags a scaled density") {
  for (const auto& s : {uniform(), tent(), beta()}) {
    const auto rep = validate(s);
    CHECK(rep.passed());
    for (const auto& c : rep.checks) CHECK(c.residual < 1e-9);
  }
  const auto bad = SignalStructure::from_density(0.3, 0.7, [](double) { return 2.75; });
  const auto rep = validate(bad);
  CHECK_FALSE(rep.passed());
  REQUIRE(rep.find("mass") != nullptr);
  CHECK(rep.find("mass")->residual == doctest::Approx(0.1).epsilon(1e-6));
  CHECK(validate(beta()).find("mean")->residual < 1e-9);
}

TEST_CASE("classification of the built-in families") {
  const auto u = classify(uniform());
  CHECK(u.kind == SignalKind::BoundedNonVanishing);
  CHECK(u.g1_lo == doctest::Approx(5.0 * 0.7));
  CHECK(classify(tent()).kind == SignalKind::BoundedVanishing);
  CHECK(classify(tent()).vanishing_at_lo());
  CHECK(classify(beta()).kind == SignalKind::Unbounded);
}

TEST_CASE("power endpoint family interpolates between uniform and vanishing") {
  FamilyParams p;
  p.kappa = 0.0;
  CHECK(classify(SignalStructure::make(Family::PowerEndpoint, p)).kind == SignalKind::BoundedNonVanishing);
  p.kappa = 2.0;
  const auto s = SignalStructure::make(Family::PowerEndpoint, p);
  CHECK(classify(s).kind == SignalKind::BoundedVanishing);
  CHECK(validate(s).passed());
}

TEST_CASE("invalid family parameters are rejected") {
  FamilyParams p;
  p.lo = 0.6;
  p.hi = 0.4;
  CHECK_THROWS_AS(SignalStructure::make(Family::UniformBelief, p), DomainError);
  p.lo = 0.2;
  p.hi = 0.7;  // asymmetric support cannot satisfy the mean condition
  CHECK_THROWS_AS(SignalStructure::make(Family::UniformBelief, p), DomainError);
  CHECK_THROWS_AS(family_from_string("Gaussian"), DomainError);
}

TEST_CASE("custom table round trip") {
  const std::string path = "custom_table_test.txt";
  {
    std::ofstream out(path);
    out << "# x m\n";
    for (int i = 0; i <= 40; ++i) out << 0.3 + 0.01 * i << " " << 2.5 << "\n";
  }
  FamilyParams p;
  p.table = read_density_table(path);
  const auto s = SignalStructure::make(Family::Custom, p);
  CHECK(s.cdf(State::Zero, 0.5) == doctest::Approx(uniform_g0(0.5)).epsilon(1e-6));
  CHECK(classify(s).kind == SignalKind::BoundedNonVanishing);
  CHECK(validate(s, 1e-6).passed());
  std::remove(path.c_str());
}

TEST_CASE("likelihood ratio of CDFs is above one and non-increasing") {
  const auto s = uniform();
  CHECK(lr_ratio(s, 0.4) == doctest::Approx(0.325 / 0.175).epsilon(1e-9));
  CHECK(lr_ratio(s, 0.6) == doctest::Approx(0.825 / 0.675).epsilon(1e-9));
  CHECK(lr_ratio(s, 0.7 - 1e-9) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK_THROWS_AS(lr_ratio(s, 0.3), DomainError);
  for (const auto& f : {uniform(), tent(), beta()}) {
    const double lo = f.support_lo();
    const double hi = f.support_hi();
    double prev = INFINITY;
    for (int i = 1; i < 1000; ++i) {
      const double r = lo + (hi - lo) * i / 1000.0;
      const double q = lr_ratio(f, r);
      CHECK(q > 1.0);
      CHECK(q <= prev * (1.0 + 1e-9));
      prev = q;
    }
  }
}

TEST_CASE("belief draws are reproducible and have the right mean") {
  const auto s = uniform();
  std::mt19937_64 a(11);
  std::mt19937_64 b(11);
  for (int i = 0; i < 100; ++i) CHECK(sample_belief(s, State::Zero, a) == sample_belief(s, State::Zero, b));

  std::mt19937_64 rng(5);
  const int n = 1000000;
  double sum = 0.0;
  double sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double p = sample_belief(s, State::Zero, rng);
    sum += p;
    sq += p * p;
  }
  const double mean = sum / n;
  const double sd = std::sqrt(sq / n - mean * mean);
  const double expect = (5.0 / 3.0) * (0.343 - 0.027);
  CHECK(std::abs(mean - expect) < 3.0 * sd / std::sqrt(double(n)));
}
