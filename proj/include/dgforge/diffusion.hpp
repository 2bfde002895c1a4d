#pragma once

#include <cmath>
#include <vector>

#include "dgforge/error.hpp"
#include "dgforge/kinematics.hpp"
#include "dgforge/rng.hpp"

namespace dgforge {

/// Fixed DDPM noise schedule. Step indices are 1-based: entries [t-1] hold
/// the values for step t.
struct NoiseSchedule {
  int T = 0;
  std::vector<double> beta, alpha, alpha_bar, posterior_var;

  double beta_at(int t) const { return beta[t - 1]; }
  double alpha_at(int t) const { return alpha[t - 1]; }
  double alpha_bar_at(int t) const { return alpha_bar[t - 1]; }
  /// alpha_bar at t-1, with alpha_bar_0 = 1.
  double alpha_bar_prev(int t) const { return t >= 2 ? alpha_bar[t - 2] : 1.0; }
  double posterior_var_at(int t) const { return posterior_var[t - 1]; }
  double sigma_at(int t) const { return std::sqrt(posterior_var[t - 1]); }

  void check_step(int t) const {
    if (t < 1 || t > T) throw ValidationError("diffusion step " + std::to_string(t) + " outside [1, T]");
  }
};

/// Linear beta schedule with precomputed cumulative products and the fixed
/// posterior variance beta~_t = beta_t (1 - abar_{t-1}) / (1 - abar_t).
inline NoiseSchedule make_schedule(int T, double beta_start, double beta_end) {
  require(T >= 1, "schedule: T must be >= 1");
  require(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0,
          "schedule: need 0 < beta_start <= beta_end < 1");
  NoiseSchedule s;
  s.T = T;
  s.beta.resize(T);
  s.alpha.resize(T);
  s.alpha_bar.resize(T);
  s.posterior_var.resize(T);
  double prod = 1.0;
  for (int i = 0; i < T; ++i) {
    s.beta[i] = T == 1 ? beta_start : beta_start + (beta_end - beta_start) * i / (T - 1);
    s.alpha[i] = 1.0 - s.beta[i];
    prod *= s.alpha[i];
    s.alpha_bar[i] = prod;
  }
  for (int t = 1; t <= T; ++t)
    s.posterior_var[t - 1] = s.beta_at(t) * (1.0 - s.alpha_bar_prev(t)) / (1.0 - s.alpha_bar_at(t));
  return s;
}

inline void fill_normal(Vec& v, CounterRng& rng) {
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.normal();
}

inline Vec normal_vector(Eigen::Index n, CounterRng& rng) {
  Vec v(n);
  fill_normal(v, rng);
  return v;
}

/// h_t = sqrt(abar_t) h_0 + sqrt(1 - abar_t) noise.
inline Vec forward_corrupt(const Vec& h0, int t, const NoiseSchedule& s, const Vec& noise) {
  s.check_step(t);
  require(h0.size() == noise.size(), "forward_corrupt: dimension mismatch");
  const double ab = s.alpha_bar_at(t);
  return std::sqrt(ab) * h0 + std::sqrt(1.0 - ab) * noise;
}

/// One-step inversion of the corruption with predicted noise.
inline Vec estimate_h0(const Vec& ht, const Vec& eps_pred, int t, const NoiseSchedule& s) {
  s.check_step(t);
  require(ht.size() == eps_pred.size(), "estimate_h0: dimension mismatch");
  const double ab = s.alpha_bar_at(t);
  return (ht - std::sqrt(1.0 - ab) * eps_pred) / std::sqrt(ab);
}

/// d(h0_hat) / d(eps_pred) is this scalar times the identity.
inline double h0_eps_factor(int t, const NoiseSchedule& s) {
  const double ab = s.alpha_bar_at(t);
  return -std::sqrt(1.0 - ab) / std::sqrt(ab);
}

struct PosteriorStep {
  Vec mean;
  Vec prev;
};

/// mu = (h_t - beta_t / sqrt(1 - abar_t) eps) / sqrt(alpha_t);
/// h_{t-1} = mu + sqrt(beta~_t) noise, with noise ignored at t = 1.
inline PosteriorStep posterior_step(const Vec& ht, const Vec& eps_pred, int t, const NoiseSchedule& s,
                                    const Vec& noise) {
  s.check_step(t);
  require(ht.size() == eps_pred.size() && ht.size() == noise.size(), "posterior_step: dimension mismatch");
  PosteriorStep out;
  out.mean = (ht - s.beta_at(t) / std::sqrt(1.0 - s.alpha_bar_at(t)) * eps_pred) / std::sqrt(s.alpha_at(t));
  out.prev = t == 1 ? out.mean : Vec(out.mean + s.sigma_at(t) * noise);
  return out;
}

/// Per-dimension z-scoring of physical poses.
struct PoseNormalizer {
  Vec mean;
  Vec stddev;

  static PoseNormalizer fit(const std::vector<Vec>& poses, double min_std = 1e-3) {
    require(!poses.empty(), "normalizer: no poses");
    const auto n = poses.front().size();
    PoseNormalizer z;
    z.mean = Vec::Zero(n);
    z.stddev = Vec::Zero(n);
    for (const auto& p : poses) {
      require(p.size() == n, "normalizer: inconsistent pose dimensions");
      z.mean += p;
    }
    z.mean /= static_cast<double>(poses.size());
    for (const auto& p : poses) z.stddev.array() += (p - z.mean).array().square();
    z.stddev = (z.stddev / static_cast<double>(poses.size())).cwiseSqrt().cwiseMax(min_std);
    return z;
  }

  static PoseNormalizer identity(Eigen::Index n) { return {Vec::Zero(n), Vec::Ones(n)}; }

  Vec normalize(const Vec& h) const { return (h - mean).cwiseQuotient(stddev); }
  Vec denormalize(const Vec& z) const { return mean + stddev.cwiseProduct(z); }
  /// Chain rule from a physical-unit gradient to a normalized-unit gradient.
  Vec grad_to_normalized(const Vec& g) const { return stddev.cwiseProduct(g); }
};

}  // namespace dgforge
