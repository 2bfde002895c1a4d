// Small builders shared by the unit tests and the acceptance binary.
#pragma once

#include <algorithm>
#include <memory>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "dgforge/dgforge.hpp"
#include "oracles.hpp"

namespace fixture {

using namespace dgforge;

/// Rigid hand with one link per entry of `links`, all attached to the hand
/// frame; every sample counts as an inner sample.
inline KinematicHandModel point_hand(const std::vector<std::vector<Vec3>>& links) {
  std::vector<Link> ls;
  for (std::size_t k = 0; k < links.size(); ++k) {
    Link l;
    l.name = "body" + std::to_string(k);
    l.surface_points = links[k];
    for (std::size_t i = 0; i < links[k].size(); ++i) l.inner_points.push_back(i);
    ls.push_back(l);
  }
  return KinematicHandModel(std::move(ls));
}

/// Square patch of the plane z = 0 with normal +z (the object lies below).
inline PointCloud plane_patch(double half = 0.05, int n = 21) {
  std::vector<Vec3> p, nn;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      p.emplace_back(-half + 2 * half * i / (n - 1), -half + 2 * half * j / (n - 1), 0.0);
      nn.push_back(Vec3::UnitZ());
    }
  return PointCloud(p, nn);
}

inline ObjectSpec sphere_spec(double r = 0.035) {
  ObjectSpec o;
  o.id = "sphere_fixture";
  o.shape = ToyShape::sphere;
  o.size = Vec3(r, 0, 0);
  return o;
}

inline ObjectSpec box_spec() {
  ObjectSpec o;
  o.id = "box_fixture";
  o.shape = ToyShape::box;
  o.size = Vec3(0.03, 0.025, 0.035);
  o.rounding = 0.006;
  return o;
}

inline ObjectSpec cylinder_spec() {
  ObjectSpec o;
  o.id = "cylinder_fixture";
  o.shape = ToyShape::cylinder;
  o.size = Vec3(0.03, 0.04, 0);
  o.rounding = 0.006;
  return o;
}

inline std::unique_ptr<ObjectAsset> asset(const ObjectSpec& o, std::size_t cloud = 1024) {
  ObjectSampling s;
  s.cloud_points = cloud;
  s.loss_points = std::min<std::size_t>(cloud, 512);
  s.encoder_points = 64;
  return ObjectAsset::make(o.id, object_mesh(o), s);
}

/// Heuristic near-object grasp with extra random joint and placement jitter.
inline HandPose near_pose(const ObjectSpec& o, const KinematicHandModel& model, CounterRng& rng,
                          double jitter = 0.004) {
  HandSpec hs;
  ToyConfig tc;
  HandPose p = initial_grasp(o, hs, model, tc, rng);
  for (int j = 0; j < model.num_joints(); ++j) p.values[j] += rng.uniform(-0.15, 0.15);
  for (int k = 0; k < 3; ++k) p.trans()[k] += rng.uniform(-jitter, jitter);
  for (int k = 0; k < 6; ++k) p.rot6d()[k] += rng.uniform(-0.05, 0.05);
  return p;
}

/// Discrete structure of the constraint terms at a pose: nearest-sample ids,
/// pulling set, deepest sample and active self-penetration pairs. Central
/// differences are only meaningful where this stays fixed.
struct Signature {
  std::vector<std::size_t> nn;
  std::vector<std::size_t> spf_active;
  std::size_t erf_arg = 0;
  std::vector<std::pair<std::size_t, std::size_t>> srf_pairs;
  bool operator==(const Signature&) const = default;
};

inline Signature signature(const HandPose& pose, const KinematicHandModel& model, const KdTree& index,
                           const ConstraintConfig& cc) {
  Signature s;
  const FkResult fk = forward_kinematics(model, pose);
  const auto& cloud = index.cloud();
  double best = -1e300;
  for (std::size_t i = 0; i < fk.world_points.size(); ++i) {
    const auto n = oracle::nearest_scan(cloud.points(), fk.world_points[i]);
    s.nn.push_back(n.index);
    const double dot = (cloud.point(n.index) - fk.world_points[i]).dot(cloud.normal(n.index));
    const double v = (dot >= 0 ? 1 : -1) * n.distance;
    if (v > best) {
      best = v;
      s.erf_arg = i;
    }
  }
  for (auto i : model.inner_point_indices())
    if ((fk.world_points[i] - cloud.point(s.nn[i])).norm() < cc.spf_threshold) s.spf_active.push_back(i);
  for (std::size_t i = 0; i < fk.world_points.size(); ++i)
    for (std::size_t j = i + 1; j < fk.world_points.size(); ++j) {
      if (!srf_link_pair_active(model, model.point_link(i), model.point_link(j))) continue;
      if ((fk.world_points[i] - fk.world_points[j]).norm() < cc.srf_threshold) s.srf_pairs.push_back({i, j});
    }
  return s;
}

/// True when the structure is unchanged by +-h (scaled 10x for margin) on
/// every coordinate, and the max/threshold decisions are not near-ties.
inline bool fd_safe(const HandPose& pose, const KinematicHandModel& model, const KdTree& index,
                    const ConstraintConfig& cc, double h = 1e-6) {
  try {
    const Signature s0 = signature(pose, model, index, cc);
    for (Eigen::Index k = 0; k < pose.values.size(); ++k) {
      for (double sgn : {-1.0, 1.0}) {
        HandPose q = pose;
        q.values[k] += sgn * 10.0 * h;
        if (!(signature(q, model, index, cc) == s0)) return false;
      }
    }
  } catch (const ValidationError&) {
    return false;
  }
  return true;
}

/// Degenerate-rotation guard for random 6D vectors.
inline bool well_conditioned_rot6d(const HandPose& p) {
  const Vec3 a = p.rot6d().head<3>(), b = p.rot6d().tail<3>();
  return a.norm() > 0.3 && a.normalized().cross(b).norm() > 0.3;
}

}  // namespace fixture
