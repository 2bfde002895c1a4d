#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "dgforge/diffusion.hpp"
#include "dgforge/error.hpp"
#include "dgforge/kinematics.hpp"
#include "dgforge/nn.hpp"
#include "dgforge/objectives.hpp"
#include "dgforge/parallel.hpp"

namespace dgforge {

enum class GuidanceMode { none, offset, dsg };

inline const char* guidance_mode_name(GuidanceMode m) {
  switch (m) {
    case GuidanceMode::offset: return "offset";
    case GuidanceMode::dsg: return "dsg";
    case GuidanceMode::none: break;
  }
  return "none";
}

inline GuidanceMode parse_guidance_mode(const std::string& s) {
  if (s == "none") return GuidanceMode::none;
  if (s == "offset") return GuidanceMode::offset;
  if (s == "dsg") return GuidanceMode::dsg;
  throw ValidationError("guidance: unknown mode '" + s + "' (expected none, offset or dsg)");
}

struct GuidanceConfig {
  GuidanceMode mode = GuidanceMode::none;
  double strength = 1.0;  // offset mode
  double rate = 0.1;      // dsg mode
  ConstraintWeights weights;
  bool clamp_final = true;
  bool freeze_eps_jacobian = true;

  void validate() const {
    require(strength >= 0.0, "guidance: strength must be >= 0");
    require(rate >= 0.0 && rate <= 1.0, "guidance: rate must be in [0, 1]");
    require(weights.spf >= 0.0 && weights.erf >= 0.0 && weights.srf >= 0.0, "guidance: weights must be >= 0");
  }
};

/// Read-only inputs shared by every chain of one object.
struct SamplerContext {
  const GraspNet* net = nullptr;
  const NoiseSchedule* schedule = nullptr;
  PoseNormalizer normalizer;
  Vec feature;                               // encoder output for the object
  PoseObjective objective;                   // physical-unit objective, may be empty
  const KinematicHandModel* model = nullptr;  // only needed for clamp_final
};

struct GuidanceGradient {
  Vec grad;           // d objective / d h_t, normalized coordinates
  double value = 0.0;  // objective at the clean-sample estimate
};

/// Objective on the denormalized clean-sample estimate and its gradient
/// w.r.t. the normalized estimate. Degenerate rotations give zero.
inline ConstraintEval objective_at_estimate(const SamplerContext& ctx, const Vec& h0n) {
  ConstraintEval e;
  try {
    e = ctx.objective(HandPose(ctx.normalizer.denormalize(h0n)));
  } catch (const ValidationError&) {
    return ConstraintEval{0.0, Vec::Zero(h0n.size())};
  }
  if (!std::isfinite(e.value) || !e.grad_pose.allFinite())
    throw NumericalError("guidance: non-finite constraint value or gradient");
  e.grad_pose = ctx.normalizer.grad_to_normalized(e.grad_pose);
  return e;
}

/// Gradient of the objective at h0_hat(h_t) with respect to h_t. With the
/// noise prediction frozen this is grad / sqrt(abar_t); otherwise the
/// network input Jacobian enters as (I - sqrt(1 - abar_t) J_eps)^T.
inline GuidanceGradient guidance_gradient(const SamplerContext& ctx, const Vec& ht, int t, const Vec& eps_hat,
                                          bool freeze_eps_jacobian) {
  const auto& s = *ctx.schedule;
  s.check_step(t);
  GuidanceGradient out;
  if (!ctx.objective) {
    out.grad = Vec::Zero(ht.size());
    return out;
  }
  const double ab = s.alpha_bar_at(t);
  const ConstraintEval e = objective_at_estimate(ctx, estimate_h0(ht, eps_hat, t, s));
  out.value = e.value;
  const Vec& u = e.grad_pose;
  if (freeze_eps_jacobian) {
    out.grad = u / std::sqrt(ab);
  } else {
    const GraspNet& net = *ctx.net;
    Mlp::Cache cache;
    net.denoiser.forward(denoiser_input(net, Matrix(ht), {t}, Matrix(ctx.feature)), &cache);
    Mlp scratch = net.denoiser.zeros_like();
    const Matrix d_in = net.denoiser.backward(cache, Matrix(u), scratch);
    out.grad = (u - std::sqrt(1.0 - ab) * d_in.col(0).head(ht.size())) / std::sqrt(ab);
  }
  if (!out.grad.allFinite()) throw NumericalError("guidance: non-finite gradient through the clean-sample estimate");
  return out;
}

/// Scale used by the guided step. At t = 1 the posterior variance is zero, so
/// guidance falls back to beta_1 there (no noise is added either way).
inline double guidance_sigma(const NoiseSchedule& s, int t) {
  return t >= 2 ? s.sigma_at(t) : std::sqrt(s.beta_at(1));
}

/// Posterior mean shifted against the gradient: mu - s Sigma_t g.
inline Vec step_offset(const Vec& mu, const Vec& grad, int t, const NoiseSchedule& s, double strength,
                       const Vec& noise) {
  const double sg = guidance_sigma(s, t);
  Vec out = mu - (strength * sg * sg) * grad;
  if (t >= 2) out += s.sigma_at(t) * noise;
  return out;
}

/// Step constrained to the sphere of radius sqrt(n) sigma_t around the mean,
/// blending the sampled direction with the unit descent direction.
inline Vec step_dsg(const Vec& mu, const Vec& grad, int t, const NoiseSchedule& s, double rate, const Vec& noise) {
  const double n = static_cast<double>(mu.size());
  const double sg = guidance_sigma(s, t);
  const double r = std::sqrt(n) * sg;
  const double gn = grad.norm();
  if (gn == 0.0 || !std::isfinite(gn)) return t >= 2 ? Vec(mu + s.sigma_at(t) * noise) : mu;
  const Vec d_star = -r * grad / gn;
  const Vec d_sample = t >= 2 ? Vec(sg * noise) : d_star;
  const Vec d_m = d_sample + rate * (d_star - d_sample);
  const double dn = d_m.norm();
  if (dn < 1e-12) return t >= 2 ? Vec(mu + s.sigma_at(t) * noise) : mu;
  return mu + (r / dn) * d_m;
}

/// Per-chain noise stream: start noise at step T + 1, step noise at step t.
inline CounterRng chain_rng(std::uint64_t seed, std::uint64_t chain, int t) {
  return CounterRng(seed, chain, static_cast<std::uint64_t>(t));
}

/// Runs the reverse chain for `count` independent chains of one object.
/// `first_chain` offsets the chain ids so splitting a request into batches
/// reproduces the same samples.
inline std::vector<Vec> sample_normalized(const SamplerContext& ctx, std::size_t count, const GuidanceConfig& g,
                                          std::uint64_t seed, std::size_t first_chain = 0) {
  g.validate();
  require(ctx.net && ctx.schedule, "sampler: network and schedule required");
  const GraspNet& net = *ctx.net;
  const auto& s = *ctx.schedule;
  const int n = net.pose_dim;
  if (ctx.normalizer.mean.size() != n)
    throw ValidationError("sampler: normalizer has " + std::to_string(ctx.normalizer.mean.size()) +
                          " dims, network expects " + std::to_string(n));
  require(ctx.feature.size() == net.config.feature_dim(), "sampler: object feature size mismatch");
  if (count == 0) return {};
  const bool guided = g.mode != GuidanceMode::none && ctx.objective && !g.weights.all_zero();
  const auto B = static_cast<Eigen::Index>(count);

  Matrix h(n, B);
  for (Eigen::Index b = 0; b < B; ++b) {
    CounterRng rng = chain_rng(seed, first_chain + b, s.T + 1);
    h.col(b) = normal_vector(n, rng);
  }
  const Matrix features = ctx.feature.replicate(1, B);
  for (int t = s.T; t >= 1; --t) {
    const Matrix eps = denoiser_forward(net, h, std::vector<int>(B, t), features);
    Matrix next(n, B);
    parallel_for(count, [&](std::size_t i) {
      const auto b = static_cast<Eigen::Index>(i);
      CounterRng rng = chain_rng(seed, first_chain + i, t);
      const Vec noise = normal_vector(n, rng);
      const Vec ht = h.col(b), e = eps.col(b);
      const PosteriorStep step = posterior_step(ht, e, t, s, noise);
      if (!guided) {
        next.col(b) = step.prev;
        return;
      }
      const Vec grad = guidance_gradient(ctx, ht, t, e, g.freeze_eps_jacobian).grad;
      next.col(b) = g.mode == GuidanceMode::offset ? step_offset(step.mean, grad, t, s, g.strength, noise)
                                                   : step_dsg(step.mean, grad, t, s, g.rate, noise);
    });
    if (!next.allFinite()) throw NumericalError("sampler: non-finite state at step " + std::to_string(t));
    h = std::move(next);
  }
  std::vector<Vec> out(count);
  for (Eigen::Index b = 0; b < B; ++b) out[b] = h.col(b);
  return out;
}

/// Physical-unit poses with the rotation re-orthonormalized and (optionally)
/// joints clamped to their limits.
inline std::vector<HandPose> sample(const SamplerContext& ctx, std::size_t count, const GuidanceConfig& g,
                                    std::uint64_t seed, std::size_t first_chain = 0) {
  const auto raw = sample_normalized(ctx, count, g, seed, first_chain);
  std::vector<HandPose> out;
  out.reserve(raw.size());
  for (const auto& z : raw) {
    HandPose p(ctx.normalizer.denormalize(z));
    if (ctx.model) {
      const int K = ctx.model->num_joints();
      if (p.dim() == ctx.model->pose_dim() && p.num_joints() == K) {
        try {
          const Mat3 R = orthonormalize_rot6d(p.rot6d());
          p.rot6d().head<3>() = R.col(0);
          p.rot6d().tail<3>() = R.col(1);
        } catch (const ValidationError&) {
        }
        if (g.clamp_final) p = ctx.model->clamp_to_limits(p);
      }
    }
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace dgforge
