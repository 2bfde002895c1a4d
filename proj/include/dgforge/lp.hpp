#pragma once

#include <Eigen/Core>

#include <cmath>
#include <limits>
#include <vector>

#include "dgforge/error.hpp"

namespace dgforge {

struct FeasibilityResult {
  bool feasible = false;
  Eigen::VectorXd x;        // a witness when feasible
  double residual = 0.0;    // phase-I objective at termination
  int iterations = 0;
};

/// Decides whether {x >= 0 : A x = b} is non-empty with a dense phase-I
/// simplex (artificial variables, Bland's rule). Throws NumericalError when
/// the iteration cap is hit, which is distinct from infeasibility.
inline FeasibilityResult find_nonnegative_solution(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                                                   double tol = 1e-9, int max_iterations = 20000) {
  const Eigen::Index m = A.rows();
  const Eigen::Index n = A.cols();
  require(b.size() == m, "lp: rhs length does not match constraint rows");
  FeasibilityResult res;
  res.x = Eigen::VectorXd::Zero(n);
  if (m == 0) {
    res.feasible = true;
    return res;
  }
  if (!A.allFinite() || !b.allFinite()) throw NumericalError("lp: non-finite problem data");

  // Tableau columns: [x (n) | artificial (m) | rhs]
  Eigen::MatrixXd tab = Eigen::MatrixXd::Zero(m, n + m + 1);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double sgn = b[i] < 0.0 ? -1.0 : 1.0;
    tab.row(i).head(n) = sgn * A.row(i);
    tab(i, n + i) = 1.0;
    tab(i, n + m) = sgn * b[i];
  }
  std::vector<Eigen::Index> basis(m);
  for (Eigen::Index i = 0; i < m; ++i) basis[i] = n + i;

  // Reduced costs for minimizing the sum of artificials, rebuilt from the
  // tableau every iteration so rounding in the cost row cannot accumulate.
  Eigen::RowVectorXd cost(n + m + 1);
  const auto refresh_cost = [&] {
    cost.setZero();
    cost.segment(n, m).setOnes();
    for (Eigen::Index i = 0; i < m; ++i)
      if (basis[i] >= n) cost -= tab.row(i);
  };

  const double scale = 1.0 + b.cwiseAbs().maxCoeff();
  int it = 0;
  for (; it < max_iterations; ++it) {
    refresh_cost();
    // Bland: lowest eligible column. A column whose entries are all below the
    // pivot tolerance only looks improving through rounding; skip it.
    Eigen::Index enter = -1;
    Eigen::Index leave = -1;
    for (Eigen::Index j = 0; j < n + m && leave < 0; ++j) {
      if (cost[j] >= -tol) continue;
      double best_ratio = std::numeric_limits<double>::infinity();
      for (Eigen::Index i = 0; i < m; ++i) {
        const double a = tab(i, j);
        if (a <= tol) continue;
        const double ratio = tab(i, n + m) / a;
        if (ratio < best_ratio - 1e-15 ||
            (leave >= 0 && std::abs(ratio - best_ratio) <= 1e-15 && basis[i] < basis[leave])) {
          best_ratio = ratio;
          leave = i;
        }
      }
      if (leave >= 0) enter = j;
    }
    if (enter < 0) break;
    tab.row(leave) /= tab(leave, enter);
    for (Eigen::Index i = 0; i < m; ++i) {
      if (i != leave && tab(i, enter) != 0.0) tab.row(i) -= tab(i, enter) * tab.row(leave);
    }
    basis[leave] = enter;
  }
  if (it == max_iterations) throw NumericalError("lp: iteration limit reached");
  refresh_cost();
  res.iterations = it;
  res.residual = -cost[n + m];
  for (Eigen::Index i = 0; i < m; ++i)
    if (basis[i] < n) res.x[basis[i]] = std::max(0.0, tab(i, n + m));
  res.feasible = res.residual <= tol * scale && (A * res.x - b).cwiseAbs().maxCoeff() <= 1e-7 * scale;
  return res;
}

}  // namespace dgforge
