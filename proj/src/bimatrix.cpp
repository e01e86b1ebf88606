#include "herd/bimatrix.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace herd::bimatrix {

namespace {

constexpr double kPivotEps = 1e-12;

// Dense simplex-style tableau [coefficients | rhs] used for complementary
// pivoting. Variable indices double as labels.
class Tableau {
 public:
  Tableau(std::size_t rows, std::size_t vars) : rows_(rows), cols_(vars + 1), t_(rows * (vars + 1), 0.0), basis_(rows) {}

  double& at(std::size_t r, std::size_t c) { return t_[r * cols_ + c]; }
  double at(std::size_t r, std::size_t c) const { return t_[r * cols_ + c]; }
  double& rhs(std::size_t r) { return at(r, cols_ - 1); }
  double rhs(std::size_t r) const { return at(r, cols_ - 1); }

  void set_basis(std::size_t r, std::size_t var) { basis_[r] = var; }
  void freeze_lex_columns() { lex_ = basis_; }

  // Pivots `entering` into the basis and returns the variable that leaves,
  // or nullopt if the column is unbounded.
  std::optional<std::size_t> pivot(std::size_t entering) {
    std::vector<std::size_t> cand;
    for (std::size_t r = 0; r < rows_; ++r) {
      if (at(r, entering) > kPivotEps) cand.push_back(r);
    }
    if (cand.empty()) return std::nullopt;

    // Lexicographic minimum ratio: rhs first, then the columns of the
    // initial basis (which hold the current basis inverse).
    auto key = [&](std::size_t r, std::size_t k) {
      const double v = k == 0 ? rhs(r) : at(r, lex_[k - 1]);
      return v / at(r, entering);
    };
    for (std::size_t k = 0; k <= lex_.size() && cand.size() > 1; ++k) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t r : cand) best = std::min(best, key(r, k));
      const double slack = 1e-12 * std::max(1.0, std::abs(best));
      std::vector<std::size_t> keep;
      for (std::size_t r : cand) {
        if (key(r, k) <= best + slack) keep.push_back(r);
      }
      cand.swap(keep);
    }
    const std::size_t pr = cand.front();
    const std::size_t leaving = basis_[pr];

    const double inv = 1.0 / at(pr, entering);
    double* prow = &t_[pr * cols_];
    for (std::size_t c = 0; c < cols_; ++c) prow[c] *= inv;
    prow[entering] = 1.0;
    for (std::size_t r = 0; r < rows_; ++r) {
      if (r == pr) continue;
      double* row = &t_[r * cols_];
      const double f = row[entering];
      if (f == 0.0) continue;
      for (std::size_t c = 0; c < cols_; ++c) row[c] -= f * prow[c];
      row[entering] = 0.0;
    }
    basis_[pr] = entering;
    return leaving;
  }

  // Values of the basic variables; non-basic ones are zero.
  std::vector<double> values(std::size_t vars) const {
    std::vector<double> v(vars, 0.0);
    for (std::size_t r = 0; r < rows_; ++r) v[basis_[r]] = std::max(0.0, rhs(r));
    return v;
  }

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<double> t_;
  std::vector<std::size_t> basis_;
  std::vector<std::size_t> lex_;
};

Eigen::MatrixXd shifted_positive(const Eigen::MatrixXd& M) {
  return (M.array() - M.minCoeff() + 1.0).matrix();
}

Eigen::VectorXd normalised(const std::vector<double>& v, std::size_t from, std::size_t count) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(count));
  double sum = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    out(static_cast<Eigen::Index>(i)) = v[from + i];
    sum += v[from + i];
  }
  if (sum > 0.0) out /= sum;
  return out;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& u, double temperature) {
  const double top = u.maxCoeff();
  Eigen::VectorXd e = ((u.array() - top) / temperature).exp().matrix();
  return e / e.sum();
}

}  // namespace

Regret regret(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Profile& p) {
  const Eigen::VectorXd row_pay = A * p.col;
  const Eigen::VectorXd col_pay = B.transpose() * p.row;
  Regret r;
  r.row = std::max(0.0, row_pay.maxCoeff() - p.row.dot(row_pay));
  r.col = std::max(0.0, col_pay.maxCoeff() - p.col.dot(col_pay));
  return r;
}

bool is_symmetric(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, double tol) {
  if (A.rows() != A.cols() || B.rows() != A.rows() || B.cols() != A.cols()) return false;
  return (A - B.transpose()).cwiseAbs().maxCoeff() <= tol;
}

std::optional<Profile> best_pure_equilibrium(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                                             double tol, bool prefer_diagonal) {
  const Eigen::Index m = A.rows();
  const Eigen::Index n = A.cols();
  const Eigen::RowVectorXd col_best = A.colwise().maxCoeff();
  const Eigen::VectorXd row_best = B.rowwise().maxCoeff();
  auto cell_regret = [&](Eigen::Index i, Eigen::Index j) {
    return std::max(col_best(j) - A(i, j), row_best(i) - B(i, j));
  };

  double best = std::numeric_limits<double>::infinity();
  Eigen::Index bi = -1;
  Eigen::Index bj = -1;
  if (prefer_diagonal) {
    for (Eigen::Index i = 0; i < std::min(m, n); ++i) {
      const double r = cell_regret(i, i);
      if (r < best) {
        best = r;
        bi = bj = i;
      }
    }
  }
  if (!(best <= tol)) {
    for (Eigen::Index i = 0; i < m; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        const double r = cell_regret(i, j);
        if (r < best) {
          best = r;
          bi = i;
          bj = j;
        }
      }
    }
  }
  if (!(best <= tol)) return std::nullopt;
  Profile p{Eigen::VectorXd::Zero(m), Eigen::VectorXd::Zero(n)};
  p.row(bi) = 1.0;
  p.col(bj) = 1.0;
  return p;
}

std::optional<Profile> lemke_howson(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                                    std::size_t label, std::size_t max_pivots) {
  const auto m = static_cast<std::size_t>(A.rows());
  const auto n = static_cast<std::size_t>(A.cols());
  const Eigen::MatrixXd Ap = shifted_positive(A);
  const Eigen::MatrixXd Bp = shifted_positive(B);

  // Row player's polytope {x >= 0 : B'^T x <= 1}: vars x_0..x_{m-1}, slacks
  // s_0..s_{n-1} carry labels m..m+n-1.
  Tableau P(n, m + n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < m; ++i) P.at(j, i) = Bp(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    P.at(j, m + j) = 1.0;
    P.rhs(j) = 1.0;
    P.set_basis(j, m + j);
  }
  P.freeze_lex_columns();

  // Column player's polytope {y >= 0 : A' y <= 1}: slacks r_0..r_{m-1},
  // vars y_0..y_{n-1} carry labels m..m+n-1.
  Tableau Q(m, m + n);
  for (std::size_t i = 0; i < m; ++i) {
    Q.at(i, i) = 1.0;
    for (std::size_t j = 0; j < n; ++j) Q.at(i, m + j) = Ap(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    Q.rhs(i) = 1.0;
    Q.set_basis(i, i);
  }
  Q.freeze_lex_columns();

  bool in_p = label < m;
  std::size_t entering = label;
  for (std::size_t step = 0; step < max_pivots; ++step) {
    Tableau& T = in_p ? P : Q;
    const auto leaving = T.pivot(entering);
    if (!leaving) return std::nullopt;
    if (*leaving == label) {
      Profile out;
      out.row = normalised(P.values(m + n), 0, m);
      out.col = normalised(Q.values(m + n), m, n);
      if (out.row.sum() <= 0.0 || out.col.sum() <= 0.0) return std::nullopt;
      return out;
    }
    entering = *leaving;
    in_p = !in_p;
  }
  return std::nullopt;
}

std::optional<Eigen::VectorXd> symmetric_lemke_howson(const Eigen::MatrixXd& A, std::size_t label,
                                                      std::size_t max_pivots) {
  const auto n = static_cast<std::size_t>(A.rows());
  const Eigen::MatrixXd Ap = shifted_positive(A);
  // {z >= 0 : A' z <= 1}: slacks r_i are vars 0..n-1, z_i are n..2n-1; both
  // carry label i.
  Tableau T(n, 2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    T.at(i, i) = 1.0;
    for (std::size_t j = 0; j < n; ++j) T.at(i, n + j) = Ap(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    T.rhs(i) = 1.0;
    T.set_basis(i, i);
  }
  T.freeze_lex_columns();

  std::size_t entering = n + label;
  for (std::size_t step = 0; step < max_pivots; ++step) {
    const auto leaving = T.pivot(entering);
    if (!leaving) return std::nullopt;
    const std::size_t lab = *leaving % n;
    if (lab == label) {
      Eigen::VectorXd x = normalised(T.values(2 * n), n, n);
      if (x.sum() <= 0.0) return std::nullopt;
      return x;
    }
    entering = *leaving < n ? *leaving + n : *leaving - n;
  }
  return std::nullopt;
}

FictitiousPlayResult smoothed_fictitious_play(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                                              std::size_t iterations, double temperature, double tol,
                                              std::size_t check_every) {
  const Eigen::Index m = A.rows();
  const Eigen::Index n = A.cols();
  FictitiousPlayResult res;
  res.profile.row = Eigen::VectorXd::Constant(m, 1.0 / static_cast<double>(m));
  res.profile.col = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  res.regret = regret(A, B, res.profile).max();
  for (std::size_t t = 1; t <= iterations; ++t) {
    const Eigen::VectorXd bx = softmax(A * res.profile.col, temperature);
    const Eigen::VectorXd by = softmax(B.transpose() * res.profile.row, temperature);
    const double w = 1.0 / static_cast<double>(t + 1);
    res.profile.row += w * (bx - res.profile.row);
    res.profile.col += w * (by - res.profile.col);
    res.iterations = t;
    if (t % check_every == 0 || t == iterations) {
      res.regret = regret(A, B, res.profile).max();
      if (res.regret <= tol) break;
    }
  }
  return res;
}

std::optional<Profile> support_enumeration(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                                           double tol, std::size_t max_support) {
  const Eigen::Index m = A.rows();
  const Eigen::Index n = A.cols();
  const std::size_t kmax = std::min<std::size_t>(max_support, static_cast<std::size_t>(std::min(m, n)));

  // Mixed strategy on `supp` making the opponent (payoff M, indexed
  // [own, opp]) indifferent over `opp`.
  auto indifference = [](const Eigen::MatrixXd& M, const std::vector<Eigen::Index>& supp,
                         const std::vector<Eigen::Index>& opp) -> std::optional<Eigen::VectorXd> {
    const auto k = static_cast<Eigen::Index>(supp.size());
    Eigen::MatrixXd sys = Eigen::MatrixXd::Zero(k + 1, k + 1);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(k + 1);
    for (Eigen::Index a = 0; a < k; ++a) {
      for (Eigen::Index b = 0; b < k; ++b) sys(a, b) = M(supp[static_cast<std::size_t>(b)], opp[static_cast<std::size_t>(a)]);
      sys(a, k) = -1.0;
    }
    sys.row(k).head(k).setOnes();
    rhs(k) = 1.0;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(sys);
    if (!lu.isInvertible()) return std::nullopt;
    Eigen::VectorXd sol = lu.solve(rhs);
    Eigen::VectorXd w = sol.head(k);
    if (w.minCoeff() < -1e-12) return std::nullopt;
    return w.cwiseMax(0.0);
  };

  for (std::size_t k = 1; k <= kmax; ++k) {
    std::vector<bool> rsel(static_cast<std::size_t>(m), false);
    std::fill(rsel.begin(), rsel.begin() + static_cast<std::ptrdiff_t>(k), true);
    do {
      std::vector<Eigen::Index> I;
      for (Eigen::Index i = 0; i < m; ++i) {
        if (rsel[static_cast<std::size_t>(i)]) I.push_back(i);
      }
      std::vector<bool> csel(static_cast<std::size_t>(n), false);
      std::fill(csel.begin(), csel.begin() + static_cast<std::ptrdiff_t>(k), true);
      do {
        std::vector<Eigen::Index> J;
        for (Eigen::Index j = 0; j < n; ++j) {
          if (csel[static_cast<std::size_t>(j)]) J.push_back(j);
        }
        // x on I makes the column player indifferent over J (payoff B^T).
        auto x = indifference(B.transpose(), I, J);
        auto y = indifference(A, J, I);
        if (x && y) {
          Profile p{Eigen::VectorXd::Zero(m), Eigen::VectorXd::Zero(n)};
          for (std::size_t a = 0; a < k; ++a) {
            p.row(I[a]) = (*x)(static_cast<Eigen::Index>(a));
            p.col(J[a]) = (*y)(static_cast<Eigen::Index>(a));
          }
          if (regret(A, B, p).max() <= tol) return p;
        }
      } while (std::prev_permutation(csel.begin(), csel.end()));
    } while (std::prev_permutation(rsel.begin(), rsel.end()));
  }
  return std::nullopt;
}

}  // namespace herd::bimatrix
