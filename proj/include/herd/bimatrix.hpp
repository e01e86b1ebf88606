#pragma once

// Finite two-player game solvers used by the stage-game module. Player 1
// picks a row of A (its payoff), player 2 a column of B.

#include <cstddef>
#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace herd::bimatrix {

struct Profile {
  Eigen::VectorXd row;
  Eigen::VectorXd col;
};

struct Regret {
  double row = 0.0;
  double col = 0.0;
  double max() const { return row > col ? row : col; }
};

/// Best unilateral improvement for each player over pure deviations.
Regret regret(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Profile& p);

bool is_symmetric(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, double tol);

/// Pure profile (i, j) with the smallest max regret, provided it is <= tol.
/// When `prefer_diagonal` is set, diagonal cells are searched first.
std::optional<Profile> best_pure_equilibrium(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                                             double tol, bool prefer_diagonal);

/// Lemke-Howson complementary pivoting with a lexicographic ratio test,
/// dropping `label` (0..m-1 row strategies, m..m+n-1 columns). Returns
/// nothing if the pivot budget is exhausted.
std::optional<Profile> lemke_howson(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                                    std::size_t label, std::size_t max_pivots = 100000);

/// Symmetric Nash equilibrium (x, x) of the game (A, A^T).
std::optional<Eigen::VectorXd> symmetric_lemke_howson(const Eigen::MatrixXd& A, std::size_t label,
                                                      std::size_t max_pivots = 100000);

struct FictitiousPlayResult {
  Profile profile;
  double regret = 0.0;
  std::size_t iterations = 0;
};

/// Smoothed (logit) fictitious play with empirical averaging. Stops as soon
/// as the averaged profile reaches `tol`, checked every `check_every` steps.
FictitiousPlayResult smoothed_fictitious_play(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                                              std::size_t iterations, double temperature, double tol,
                                              std::size_t check_every = 500);

/// Exhaustive equal-size support enumeration; exponential, small games only.
/// Returns the first equilibrium found with regret <= tol.
std::optional<Profile> support_enumeration(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                                           double tol, std::size_t max_support);

}  // namespace herd::bimatrix
