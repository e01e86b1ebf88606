#pragma once

#include <stdexcept>
#include <string>

namespace herd {

/// State of nature: in state `Zero` firm 0 sells the superior product.
enum class State { Zero = 0, One = 1 };

enum class Action { Buy0, Buy1, Exit };

enum class Regime { Full, NonFull };

struct PriceVector {
  double tau0 = 0.0;
  double tau1 = 0.0;
};

/// Private-belief cut points. The consumer buys from firm 0 when p(s) > v0
/// and from firm 1 when p(s) < v1; in a full market v0 == v1.
struct DecisionCuts {
  double v0 = 0.5;
  double v1 = 0.5;
};

const char* to_string(State s);
const char* to_string(Action a);
const char* to_string(Regime r);
Action action_from_string(const std::string& s);

// Error hierarchy. Everything derives from herd::Error so callers can map
// categories to exit codes.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Invalid input arguments or violated preconditions.
struct DomainError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct SolverFailure : Error {
  SolverFailure(const std::string& what, double mu, double best_regret)
      : Error(what), mu(mu), best_regret(best_regret) {}
  double mu;
  double best_regret;
};

}  // namespace herd
