#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "dgforge/error.hpp"
#include "dgforge/geometry.hpp"
#include "dgforge/kinematics.hpp"

namespace dgforge {

struct ConstraintWeights {
  double spf = 1.0;
  double erf = 1.0;
  double srf = 0.5;

  ConstraintWeights scaled(double c) const { return {spf * c, erf * c, srf * c}; }
  bool all_zero() const { return spf == 0.0 && erf == 0.0 && srf == 0.0; }
};

/// Thresholds in meters; eta is the denominator stabilizer of the pulling term.
struct ConstraintConfig {
  double spf_threshold = 0.02;
  double srf_threshold = 0.01;
  double eta = 1e-8;
  ConstraintWeights weights;

  void validate() const {
    require(spf_threshold > 0.0 && srf_threshold > 0.0, "constraints: thresholds must be > 0");
    require(eta > 0.0, "constraints: eta must be > 0");
    require(weights.spf >= 0.0 && weights.erf >= 0.0 && weights.srf >= 0.0,
            "constraints: weights must be >= 0");
  }
};

struct ConstraintEval {
  double value = 0.0;
  Vec grad_pose;
};

struct ConstraintBreakdown {
  ConstraintEval spf, erf, srf;
  ConstraintEval total;  // weighted sum
};

inline void check_finite(const ConstraintEval& e, const char* term) {
  if (!std::isfinite(e.value) || !e.grad_pose.allFinite())
    throw NumericalError(std::string("non-finite value or gradient in constraint ") + term);
}

/// Nearest object sample for every FK point.
inline std::vector<Neighbor> nearest_neighbors(const FkResult& fk, const KdTree& index) {
  std::vector<Neighbor> nn(fk.world_points.size());
  for (std::size_t i = 0; i < nn.size(); ++i) nn[i] = index.nearest(fk.world_points[i]);
  return nn;
}

/// Surface pulling: mean distance of the inner samples lying within the
/// threshold of the object, sum_{i in S} sqrt(d_i) / (|S| + eta), where d_i is
/// the squared NN distance and S = {i : d_i < threshold^2}.
inline ConstraintEval surface_pulling_force(const FkResult& fk, const KinematicHandModel& model,
                                            const KdTree& index, const ConstraintConfig& cfg,
                                            const std::vector<Neighbor>* nn = nullptr) {
  const auto& inner = model.inner_point_indices();
  require(!inner.empty(), "surface pulling force: hand has no inner-surface samples");
  const double thr2 = cfg.spf_threshold * cfg.spf_threshold;
  std::vector<std::size_t> active;
  std::vector<Neighbor> found;
  for (auto i : inner) {
    const Neighbor n = nn ? (*nn)[i] : index.nearest(fk.world_points[i]);
    if (n.squared < thr2) {
      active.push_back(i);
      found.push_back(n);
    }
  }
  ConstraintEval out;
  out.grad_pose = Vec::Zero(model.pose_dim());
  if (active.empty()) return out;
  const double denom = static_cast<double>(active.size()) + cfg.eta;
  double sum = 0.0;
  for (const auto& n : found) sum += std::sqrt(n.squared);
  out.value = sum / denom;
  if (fk.jacobian.size() > 0) {
    for (std::size_t k = 0; k < active.size(); ++k) {
      const double d = found[k].distance;
      if (d <= 0.0) continue;
      const Vec3 g = (fk.world_points[active[k]] - index.cloud().point(found[k].index)) / (d * denom);
      out.grad_pose.noalias() += fk.point_jacobian(active[k]).transpose() * g;
    }
  }
  return out;
}

/// Deepest signed penetration: max_i s_i * d_i over all hand samples.
/// Negative values are clearances. The subgradient flows through the arg-max
/// sample only (lowest index on ties).
inline ConstraintEval external_penetration_force(const FkResult& fk, const KinematicHandModel& model,
                                                 const KdTree& index,
                                                 const std::vector<Neighbor>* nn = nullptr) {
  require(!fk.world_points.empty(), "external penetration force: hand has no surface samples");
  const auto& cloud = index.cloud();
  double best = -std::numeric_limits<double>::infinity();
  std::size_t arg = 0;
  Neighbor arg_nn;
  int arg_sign = 1;
  for (std::size_t i = 0; i < fk.world_points.size(); ++i) {
    const Neighbor n = nn ? (*nn)[i] : index.nearest(fk.world_points[i]);
    const double dot = (cloud.point(n.index) - fk.world_points[i]).dot(cloud.normal(n.index));
    const int s = dot >= 0.0 ? 1 : -1;
    const double v = s * n.distance;
    if (v > best) {
      best = v;
      arg = i;
      arg_nn = n;
      arg_sign = s;
    }
  }
  ConstraintEval out;
  out.value = best;
  out.grad_pose = Vec::Zero(model.pose_dim());
  if (fk.jacobian.size() > 0 && arg_nn.distance > 0.0) {
    const Vec3 g = arg_sign * (fk.world_points[arg] - cloud.point(arg_nn.index)) / arg_nn.distance;
    out.grad_pose.noalias() = fk.point_jacobian(arg).transpose() * g;
  }
  return out;
}

/// Pairs of links whose samples are compared by the self-penetration term:
/// distinct links that are not directly articulated to each other (a link and
/// its nearest sampled ancestor share a joint and always touch there).
inline bool srf_link_pair_active(const KinematicHandModel& model, int a, int b) {
  if (a == b) return false;
  return model.sampled_ancestor(a) != b && model.sampled_ancestor(b) != a;
}

/// Hinge on cross-link sample distances: sum_{i<j} max(0, threshold - d_ij).
inline ConstraintEval self_penetration_force(const FkResult& fk, const KinematicHandModel& model,
                                             const ConstraintConfig& cfg) {
  require(fk.world_points.size() >= 2, "self penetration force: need at least two hand samples");
  const int L = model.num_links();
  const double thr = cfg.srf_threshold;
  const bool want_grad = fk.jacobian.size() > 0;

  // Bounding spheres per link for exact culling of far link pairs.
  std::vector<Vec3> center(L, Vec3::Zero());
  std::vector<double> radius(L, 0.0);
  std::vector<std::size_t> begin(L), count(L);
  for (int l = 0; l < L; ++l) {
    begin[l] = model.link_point_offset(l);
    count[l] = model.links()[l].surface_points.size();
    if (count[l] == 0) continue;
    for (std::size_t k = 0; k < count[l]; ++k) center[l] += fk.world_points[begin[l] + k];
    center[l] /= static_cast<double>(count[l]);
    for (std::size_t k = 0; k < count[l]; ++k)
      radius[l] = std::max(radius[l], (fk.world_points[begin[l] + k] - center[l]).norm());
  }

  ConstraintEval out;
  out.grad_pose = Vec::Zero(model.pose_dim());
  std::vector<Vec3> point_grad;
  if (want_grad) point_grad.assign(fk.world_points.size(), Vec3::Zero());
  for (int a = 0; a < L; ++a) {
    if (count[a] == 0) continue;
    for (int b = a + 1; b < L; ++b) {
      if (count[b] == 0 || !srf_link_pair_active(model, a, b)) continue;
      if ((center[a] - center[b]).norm() - radius[a] - radius[b] > thr + 1e-12) continue;
      for (std::size_t i = begin[a]; i < begin[a] + count[a]; ++i) {
        for (std::size_t j = begin[b]; j < begin[b] + count[b]; ++j) {
          const Vec3 diff = fk.world_points[i] - fk.world_points[j];
          const double d = diff.norm();
          if (d >= thr) continue;
          out.value += thr - d;
          if (want_grad && d > 0.0) {
            const Vec3 u = diff / d;
            point_grad[i] -= u;
            point_grad[j] += u;
          }
        }
      }
    }
  }
  if (want_grad) out.grad_pose = fk.pullback(point_grad);
  return out;
}

/// All three terms plus their weighted sum, sharing one FK pass.
inline ConstraintBreakdown evaluate_constraints(const HandPose& pose, const KinematicHandModel& model,
                                                const KdTree& index, const ConstraintConfig& cfg,
                                                bool with_gradient = true) {
  const FkResult fk = forward_kinematics(model, pose, with_gradient);
  const auto nn = nearest_neighbors(fk, index);
  ConstraintBreakdown out;
  out.spf = surface_pulling_force(fk, model, index, cfg, &nn);
  out.erf = external_penetration_force(fk, model, index, &nn);
  out.srf = self_penetration_force(fk, model, cfg);
  const auto& w = cfg.weights;
  out.total.value = w.spf * out.spf.value + w.erf * out.erf.value + w.srf * out.srf.value;
  out.total.grad_pose = w.spf * out.spf.grad_pose + w.erf * out.erf.grad_pose + w.srf * out.srf.grad_pose;
  if (with_gradient) {
    check_finite(out.spf, "SPF");
    check_finite(out.erf, "ERF");
    check_finite(out.srf, "SRF");
  }
  return out;
}

inline ConstraintEval surface_pulling_force(const HandPose& pose, const KinematicHandModel& model,
                                            const KdTree& index, const ConstraintConfig& cfg) {
  return surface_pulling_force(forward_kinematics(model, pose, true), model, index, cfg);
}

inline ConstraintEval external_penetration_force(const HandPose& pose, const KinematicHandModel& model,
                                                 const KdTree& index) {
  return external_penetration_force(forward_kinematics(model, pose, true), model, index);
}

inline ConstraintEval self_penetration_force(const HandPose& pose, const KinematicHandModel& model,
                                             const ConstraintConfig& cfg) {
  return self_penetration_force(forward_kinematics(model, pose, true), model, cfg);
}

inline ConstraintEval combined_constraint(const HandPose& pose, const KinematicHandModel& model,
                                          const KdTree& index, const ConstraintConfig& cfg) {
  if (cfg.weights.all_zero()) return ConstraintEval{0.0, Vec::Zero(model.pose_dim())};
  return evaluate_constraints(pose, model, index, cfg).total;
}

/// Differentiable scalar objective on a physical-unit pose; the sampler and
/// trainer only see this interface.
using PoseObjective = std::function<ConstraintEval(const HandPose&)>;

inline PoseObjective physics_objective(const KinematicHandModel& model, const KdTree& index,
                                       const ConstraintConfig& cfg) {
  return [&model, &index, cfg](const HandPose& pose) { return combined_constraint(pose, model, index, cfg); };
}

}  // namespace dgforge
