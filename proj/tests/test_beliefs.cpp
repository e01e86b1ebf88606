#include <doctest.h>

#include <cmath>
#include <random>

#include "herd/beliefs.hpp"
#include "herd/stage_game.hpp"

using namespace herd;

namespace {

SignalStructure uniform() { return SignalStructure::make(Family::UniformBelief, {}); }

double bayes(double mu, double p) { return mu * p / (mu * p + (1 - mu) * (1 - p)); }

}  // namespace

TEST_CASE("posterior examples") {
  CHECK(posterior(0.5, 0.7) == doctest::Approx(0.7));
  CHECK(posterior(0.9, 0.3) == doctest::Approx(0.27 / 0.34).epsilon(1e-12));
  CHECK(posterior(0.9, 0.5) == doctest::Approx(0.9));
  CHECK(posterior(1.0, 0.3) == 1.0);
  CHECK(posterior(0.0, 0.3) == 0.0);
  CHECK_THROWS_AS(posterior(1.0, 0.0), DomainError);
  CHECK_THROWS_AS(posterior(0.0, 1.0), DomainError);
}

TEST_CASE("posterior bounds") {
  const auto b = posterior_bounds(0.9, uniform());
  CHECK(b.lo == doctest::Approx(0.27 / 0.34).epsilon(1e-12));
  CHECK(b.hi == doctest::Approx(0.63 / 0.66).epsilon(1e-12));
  const auto h = posterior_bounds(0.5, uniform());
  CHECK(h.lo == doctest::Approx(0.3));
  CHECK(h.hi == doctest::Approx(0.7));
  const auto u = posterior_bounds(0.37, SignalStructure::make(Family::BetaUnbounded, {}));
  CHECK(u.lo == 0.0);
  CHECK(u.hi == 1.0);
}

TEST_CASE("log-likelihood ratios add") {
  CHECK(std::isinf(llr(0.0)));
  CHECK(llr(0.0) < 0);
  CHECK(std::isinf(llr(1.0)));
  CHECK(std::abs(llr(posterior(0.9, 0.3)) - (llr(0.9) + llr(0.3))) < 1e-12);
  CHECK(logistic(llr(0.37)) == doctest::Approx(0.37).epsilon(1e-14));
}

TEST_CASE("llr threshold reproduces the cut") {
  const double mu = 0.9;
  const auto full = decision_cuts(mu, {0.6, 0.2});
  CHECK(logistic(llr_threshold(mu, 0.6, 0.2, Regime::Full)) == doctest::Approx(full.cuts.v0).epsilon(1e-12));
  const auto nf = decision_cuts(mu, {0.6, 0.6});
  CHECK(logistic(llr_threshold(mu, 0.6, 0.6, Regime::NonFull)) == doctest::Approx(nf.cuts.v0).epsilon(1e-12));
}

TEST_CASE("update after action examples") {
  const auto s = uniform();
  const DecisionCuts c{0.5, 0.5};
  CHECK(update_after_action(0.5, c, Regime::Full, Action::Buy0, s) == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(update_after_action(0.5, c, Regime::Full, Action::Buy1, s) == doctest::Approx(0.4).epsilon(1e-12));
  const DecisionCuts low{0.25, 0.25};
  CHECK(update_after_action(0.5, low, Regime::Full, Action::Buy0, s) == 0.5);
  CHECK_THROWS_AS(update_after_action(0.5, low, Regime::Full, Action::Buy1, s), DomainError);
}

TEST_CASE("property: Bayes suite on random instances") {
  const auto s = uniform();
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int i = 0; i < 10000; ++i) {
    const double mu = 0.01 + 0.98 * U(rng);
    const double p = 0.01 + 0.98 * U(rng);
    // additivity and round trip
    CHECK(std::abs(llr(posterior(mu, p)) - llr(mu) - llr(p)) < 1e-10);
    CHECK(std::abs(posterior(mu, p) - bayes(mu, p)) < 1e-12);
    CHECK(std::abs(posterior(posterior(mu, p), 1.0 - p) - mu) < 1e-10);

    // martingale identity: the expected next belief equals mu
    const PriceVector tau{U(rng), U(rng)};
    const auto c = decision_cuts(mu, tau);
    const auto pr = action_probabilities(mu, c.cuts, c.regime, s);
    double expect = 0.0;
    for (Action a : {Action::Buy0, Action::Buy1, Action::Exit}) {
      if (pr.of(a) > 0.0) expect += pr.of(a) * update_after_action(mu, c.cuts, c.regime, a, s);
    }
    CHECK(std::abs(expect - mu) < 1e-10);
    CHECK(pr.buy0 + pr.buy1 + pr.exit == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("action probabilities follow the state CDFs") {
  const auto s = uniform();
  const DecisionCuts c{0.55, 0.45};
  const auto a0 = action_probabilities(State::Zero, c, Regime::NonFull, s);
  CHECK(a0.buy0 == doctest::Approx(1.0 - 2.5 * (0.55 * 0.55 - 0.09)));
  CHECK(a0.buy1 == doctest::Approx(2.5 * (0.45 * 0.45 - 0.09)));
  const auto a1 = action_probabilities(State::One, c, Regime::NonFull, s);
  CHECK(a1.buy1 == doctest::Approx(-2.5 * 0.45 * 0.45 + 5 * 0.45 - 1.275));
  const auto mix = action_probabilities(0.3, c, Regime::NonFull, s);
  CHECK(mix.exit == doctest::Approx(0.3 * a0.exit + 0.7 * a1.exit));
}

TEST_CASE("deterrence price curve") {
  const auto s = uniform();
  CHECK(deterrence_price_curve(0.9, s) == doctest::Approx(2 * 0.27 / 0.34 - 1).epsilon(1e-12));
  CHECK(deterrence_price_curve(0.7, s) == doctest::Approx(0.0).epsilon(1e-12));  // posterior(0.7, 0.3) = 1/2
  CHECK(deterrence_price_curve_firm1(0.1, s) == doctest::Approx(1 - 2 * posterior(0.1, 0.7)).epsilon(1e-12));
  CHECK_THROWS_AS(deterrence_price_curve(0.9, SignalStructure::make(Family::BetaUnbounded, {})), DomainError);
  CHECK(deterrence_slope_bound(s) == doctest::Approx(2 * 0.7 / 0.3));
}

TEST_CASE("property: h is convex in mu with slope below the bound") {
  for (double lo : {0.1, 0.3, 0.45}) {
    FamilyParams p;
    p.lo = lo;
    p.hi = 1 - lo;
    const auto s = SignalStructure::make(Family::UniformBelief, p);
    const double C = deterrence_slope_bound(s);
    const int n = 1000;
    const double d = 1.0 / (n + 1);
    for (int i = 1; i < n; ++i) {
      const double mu = i * d;
      const double a = deterrence_price_curve(mu - d, s);
      const double b = deterrence_price_curve(mu, s);
      const double c = deterrence_price_curve(mu + d, s);
      CHECK(a + c - 2 * b >= -1e-12);
      CHECK((c - b) / d <= C * (1 + 1e-12));
    }
  }
}
