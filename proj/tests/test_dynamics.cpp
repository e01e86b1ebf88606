#include <doctest.h>

#include <cmath>
#include <sstream>

#include "herd/beliefs.hpp"
#include "herd/dynamics.hpp"

using namespace herd;

namespace {

SignalStructure uniform() { return SignalStructure::make(Family::UniformBelief, {}); }
SignalStructure tent() { return SignalStructure::make(Family::Tent, {}); }
SignalStructure beta() { return SignalStructure::make(Family::BetaUnbounded, {}); }

bool same(const TrajectoryRecord& a, const TrajectoryRecord& b) {
  if (a.state != b.state || a.steps.size() != b.steps.size() || a.stop != b.stop || a.outcome != b.outcome ||
      a.terminal_mu != b.terminal_mu || a.hitting_time != b.hitting_time || a.deterrence_onset != b.deterrence_onset)
    return false;
  for (std::size_t i = 0; i < a.steps.size(); ++i) {
    const auto& x = a.steps[i];
    const auto& y = b.steps[i];
    if (x.t != y.t || x.mu != y.mu || x.tau.tau0 != y.tau.tau0 || x.tau.tau1 != y.tau.tau1 || x.action != y.action ||
        x.cuts.v0 != y.cuts.v0 || x.cuts.v1 != y.cuts.v1 || x.mu_next != y.mu_next || x.frozen != y.frozen)
      return false;
  }
  return true;
}

TrajectoryRecord record(State w, std::vector<std::pair<double, double>> mus, StopReason stop) {
  TrajectoryRecord tr;
  tr.state = w;
  for (std::size_t t = 0; t < mus.size(); ++t) {
    Step st;
    st.t = t;
    st.mu = mus[t].first;
    st.mu_next = mus[t].second;
    tr.steps.push_back(st);
  }
  tr.stop = stop;
  return tr;
}

}  // namespace

TEST_CASE("outcome classification") {
  auto tr = record(State::Zero, {{0.99, 0.9995}}, StopReason::Learned);
  CHECK(classify_outcome(tr, 1e-3) == Outcome::LearnedCorrect);
  tr.state = State::One;
  CHECK(classify_outcome(tr, 1e-3) == Outcome::LearnedWrong);
  auto h = record(State::One, {{0.93, 0.93}}, StopReason::Deterrence);
  h.steps[0].action = Action::Buy0;
  h.steps[0].frozen = true;
  CHECK(classify_outcome(h, 1e-3) == Outcome::HerdOnFirm0);
  CHECK(classify_outcome(record(State::Zero, {{0.5, 0.6}}, StopReason::Horizon), 1e-3) == Outcome::Undecided);
}

TEST_CASE("hitting time") {
  auto tr = record(State::Zero, {{0.5, 0.6}, {0.6, 0.5}, {0.5, 0.6}, {0.6, 0.7}}, StopReason::Horizon);
  tr.steps[0].action = Action::Buy0;
  tr.steps[1].action = Action::Buy1;
  tr.steps[2].action = Action::Buy0;
  tr.steps[3].action = Action::Buy0;
  REQUIRE(hitting_time(tr));
  CHECK(*hitting_time(tr) == 2);
  tr.steps[3].action = Action::Exit;
  CHECK_FALSE(hitting_time(tr));
}

TEST_CASE("simulate is deterministic per seed and run") {
  const auto s = tent();
  StageCache cache(s, SolverOptions{});
  SimulationOptions o;
  o.t_max = 300;
  o.seed = 99;
  const auto a = simulate(s, o, 3, cache);
  const auto b = simulate(s, o, 3, cache);
  CHECK(same(a, b));
  const auto c = simulate(s, o, 4, cache);
  CHECK_FALSE(same(a, c));
}

TEST_CASE("replaying actions reproduces the beliefs") {
  for (const auto& s : {tent(), uniform(), beta()}) {
    StageCache cache(s, SolverOptions{});
    SimulationOptions o;
    o.t_max = 500;
    o.seed = 5;
    for (std::size_t run = 0; run < 5; ++run) {
      const auto tr = simulate(s, o, run, cache);
      double mu = o.mu0;
      for (const auto& st : tr.steps) {
        CHECK(st.mu == mu);
        const auto c = decision_cuts(mu, st.tau);
        mu = update_after_action(mu, c.cuts, c.regime, st.action, s);
        CHECK(mu == st.mu_next);
      }
    }
  }
}

TEST_CASE("immediate herd above the threshold") {
  const auto s = uniform();
  StageCache cache(s, SolverOptions{});
  for (State w : {State::Zero, State::One}) {
    SimulationOptions o;
    o.mu0 = 0.99;
    o.state = w;
    o.herd_tail = 5;
    const auto tr = simulate(s, o, 0, cache);
    CHECK(tr.stop == StopReason::Deterrence);
    CHECK(tr.outcome == Outcome::HerdOnFirm0);
    CHECK(tr.terminal_mu == 0.99);
    REQUIRE(tr.deterrence_onset);
    CHECK(*tr.deterrence_onset == 0);
    CHECK(tr.steps.size() == 5);
    for (const auto& st : tr.steps) {
      CHECK(st.frozen);
      CHECK(st.action == Action::Buy0);
      CHECK(st.mu_next == st.mu);
    }
  }
}

TEST_CASE("martingale test detects a biased batch") {
  const auto s = tent();
  StageCache cache(s, SolverOptions{});
  MonteCarloOptions mo;
  mo.runs = 100;
  mo.sim.t_max = 400;
  mo.sim.seed = 11;
  mo.threads = 1;
  const auto res = monte_carlo(s, mo, cache);
  const auto ok = martingale_test(res.records);
  CHECK(ok.passed());
  CHECK(ok.tested > 0);
  auto bad = res.records;
  for (auto& tr : bad)
    for (auto& st : tr.steps) st.mu_next += 0.01;
  CHECK_FALSE(martingale_test(bad).passed());

  // Frozen transitions have exactly zero residual.
  auto frozen = record(State::Zero, std::vector<std::pair<double, double>>(200, {0.95, 0.95}), StopReason::Deterrence);
  const auto rep = martingale_test({frozen});
  CHECK(rep.passed());
  for (const auto& b : rep.buckets)
    if (!b.skipped) CHECK(b.mean_diff == 0.0);
}

TEST_CASE("monte carlo results do not depend on the thread count") {
  const auto s = beta();
  StageCache cache(s, SolverOptions{});
  MonteCarloOptions mo;
  mo.runs = 40;
  mo.sim.t_max = 200;
  mo.sim.seed = 21;
  mo.threads = 1;
  const auto a = monte_carlo(s, mo, cache);
  mo.threads = 4;
  const auto b = monte_carlo(s, mo, cache);
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) CHECK(same(a.records[i], b.records[i]));
  CHECK(a.summary.by_state[0].purchase_correct == b.summary.by_state[0].purchase_correct);
}

TEST_CASE("trajectory CSV round trip") {
  const auto s = uniform();
  StageCache cache(s, SolverOptions{});
  MonteCarloOptions mo;
  mo.runs = 30;
  mo.sim.t_max = 300;
  mo.sim.seed = 4;
  mo.sim.herd_tail = 3;
  const auto res = monte_carlo(s, mo, cache);
  std::stringstream ss;
  write_trajectories_csv(ss, res.records);
  const auto back = read_trajectories_csv(ss, mo.sim.eps_learn);
  REQUIRE(back.size() == res.records.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].run == res.records[i].run);
    CHECK(same(back[i], res.records[i]));
  }
}

TEST_CASE("zero runs is rejected") {
  const auto s = beta();
  StageCache cache(s, SolverOptions{});
  MonteCarloOptions mo;
  mo.runs = 0;
  CHECK_THROWS_AS(monte_carlo(s, mo, cache), ConfigError);
}

TEST_CASE("learning batch: beta learns and correctness rises") {
  const auto s = beta();
  StageCache cache(s, SolverOptions{});
  MonteCarloOptions mo;
  mo.runs = 200;
  mo.sim.t_max = 2000;
  mo.sim.seed = 31;
  const auto res = monte_carlo(s, mo, cache);
  const auto& sum = res.summary;
  CHECK(sum.learned_wrong <= poisson_quantile(sum.wrong_vertex_bound, 0.999));
  CHECK(sum.deterrence_terminations == 0);
  for (const auto& st : sum.by_state) {
    CHECK(st.learned_correct_freq >= 0.95);
    CHECK(st.purchase_correct.back() > 0.99);
    CHECK(st.purchase_correct.back() > st.purchase_correct.front());
  }
  CHECK(sum.moving_fraction > 0.5);
}

TEST_CASE("herding batch on the uniform family") {
  const auto s = uniform();
  StageCache cache(s, SolverOptions{});
  MonteCarloOptions mo;
  mo.runs = 200;
  mo.sim.t_max = 2000;
  mo.sim.seed = 41;
  mo.sim.herd_tail = 4;
  const auto res = monte_carlo(s, mo, cache);
  CHECK(res.summary.herd_freq >= 0.5);
  CHECK(res.summary.learned_wrong == 0);
  for (const auto& tr : res.records) {
    if (tr.stop != StopReason::Deterrence) continue;
    for (const auto& st : tr.steps)
      if (st.frozen) CHECK(st.mu_next == tr.terminal_mu);
  }
}

TEST_CASE("wrong-edge frequency respects the martingale bound") {
  CHECK(wrong_vertex_probability_bound(0.5, 1e-3, State::Zero) == doctest::Approx(1.0 / 999.0));
  CHECK(wrong_vertex_probability_bound(0.8, 0.1, State::One) == doctest::Approx(4.0 / 9.0));
  CHECK(poisson_quantile(0.0, 0.999) == 0);
  CHECK(poisson_quantile(1.0, 0.5) == 1);  // P(X <= 0) = 0.37, P(X <= 1) = 0.74

  const auto s = beta();
  StageCache cache(s, SolverOptions{});
  MonteCarloOptions mo;
  mo.runs = 2000;
  mo.sim.t_max = 2000;
  mo.sim.eps_learn = 0.05;
  mo.sim.seed = 12;
  mo.sim.continue_after_learning = false;
  const auto res = monte_carlo(s, mo, cache);
  const auto& sum = res.summary;
  CHECK(sum.wrong_vertex_bound == doctest::Approx(2000 * 0.05 / 0.95));
  CHECK(sum.learned_wrong > 0);
  CHECK(sum.learned_wrong <= poisson_quantile(sum.wrong_vertex_bound, 0.999));
}
