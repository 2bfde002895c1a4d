// Independent reference implementations used by the unit tests and the
// acceptance binary. None of these call into the code they check beyond
// plain data structures.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "dgforge/dgforge.hpp"

namespace oracle {

using dgforge::Vec;
using dgforge::Vec3;

/// Central finite-difference gradient of a scalar function.
inline Vec fd_gradient(const std::function<double(const Vec&)>& f, const Vec& x, double h = 1e-6) {
  Vec g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vec a = x, b = x;
    a[i] += h;
    b[i] -= h;
    g[i] = (f(a) - f(b)) / (2.0 * h);
  }
  return g;
}

/// max_i |a_i - b_i| / max(|b|_inf, floor). A shared scale keeps tiny
/// components of a large gradient from dominating.
inline double rel_error(const Vec& analytic, const Vec& numeric, double floor = 1e-8) {
  const double scale = std::max({analytic.cwiseAbs().maxCoeff(), numeric.cwiseAbs().maxCoeff(), floor});
  return (analytic - numeric).cwiseAbs().maxCoeff() / scale;
}

inline dgforge::Neighbor nearest_scan(const std::vector<Vec3>& pts, const Vec3& q) {
  dgforge::Neighbor best{0, 0.0, std::numeric_limits<double>::infinity()};
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double d2 = (pts[i] - q).squaredNorm();
    if (d2 < best.squared) best = {i, std::sqrt(d2), d2};
  }
  return best;
}

struct ConeVerdict {
  bool feasible = false;
  double margin = 0.0;  // distance of the decision from flipping
};

/// Brute force cone membership of `target` in the cone spanned by `cols`
/// (Caratheodory: a point of a 3-D cone lies in the cone of some <= 3
/// independent generators). Margin: for feasible targets, the best smallest
/// coefficient over exact subsets; otherwise minus the least violated one.
inline ConeVerdict cone_contains(const std::vector<Vec3>& cols, const Vec3& target) {
  ConeVerdict v;
  double best = -std::numeric_limits<double>::infinity();
  const std::size_t m = cols.size();
  auto consider = [&](const Eigen::MatrixXd& A) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
    if (qr.rank() < A.cols()) return;
    const Eigen::VectorXd x = qr.solve(target);
    if ((A * x - target).norm() > 1e-9) return;
    best = std::max(best, x.minCoeff());
  };
  for (std::size_t i = 0; i < m; ++i) {
    consider(Eigen::MatrixXd(cols[i]));
    for (std::size_t j = i + 1; j < m; ++j) {
      Eigen::MatrixXd A2(3, 2);
      A2 << cols[i], cols[j];
      consider(A2);
      for (std::size_t k = j + 1; k < m; ++k) {
        Eigen::Matrix3d A3;
        A3 << cols[i], cols[j], cols[k];
        consider(A3);
      }
    }
  }
  if (target.norm() == 0.0) return {true, std::numeric_limits<double>::infinity()};
  v.feasible = best >= 0.0;
  v.margin = std::abs(best);
  return v;
}

/// Depth of the deepest point inside a sphere, mm (0 when all outside).
inline double sphere_depth_mm(const std::vector<Vec3>& pts, const Vec3& center, double radius) {
  double d = 0.0;
  for (const auto& p : pts) d = std::max(d, radius - (p - center).norm());
  return 1000.0 * d;
}

inline double population_std(const std::vector<double>& xs) {
  double m = 0.0;
  for (double x : xs) m += x;
  m /= xs.size();
  double v = 0.0;
  for (double x : xs) v += (x - m) * (x - m);
  return std::sqrt(v / xs.size());
}

}  // namespace oracle
