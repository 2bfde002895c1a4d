#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "dgforge/error.hpp"
#include "dgforge/geometry.hpp"
#include "dgforge/kinematics.hpp"
#include "dgforge/lp.hpp"

namespace dgforge {

struct EvalConfig {
  double contact_epsilon = 0.005;  // m
  double friction_mu = 0.5;
  int cone_edges = 8;
  int max_contacts_per_link = 8;
  bool wrench = false;             // also require torque balance about the object origin
  double pen_nn_limit_mm = 10.0;   // hand-into-object
  double pen_cyl_limit_mm = 1.0;   // object-into-hand

  void validate() const {
    require(contact_epsilon >= 0.0, "eval: contact_epsilon must be >= 0");
    require(friction_mu >= 0.0, "eval: friction_mu must be >= 0");
    require(cone_edges >= 3, "eval: need at least 3 friction cone edges");
    require(max_contacts_per_link >= 1, "eval: max_contacts_per_link must be >= 1");
  }
};

struct Contact {
  Vec3 point;   // on the object surface
  Vec3 normal;  // outward object normal
  int link = -1;
};

struct ContactSet {
  std::vector<Contact> contacts;
  double friction_mu = 0.5;
  double contact_epsilon = 0.005;
};

/// Deepest hand sample inside the object (nearest-neighbor signed depth), mm.
inline double penetration_nn(const FkResult& fk, const KdTree& index) {
  double deepest = 0.0;
  for (const auto& p : fk.world_points)
    deepest = std::max(deepest, signed_distance_to_cloud(p, index).signed_depth());
  return 1000.0 * deepest;
}

inline double penetration_nn(const HandPose& pose, const KinematicHandModel& model, const KdTree& index) {
  return penetration_nn(forward_kinematics(model, pose), index);
}

/// Deepest object sample inside any hand link shape (phalange cylinders and
/// the palm box), evaluated in each link's frame, mm.
inline double penetration_cylinder(const FkResult& fk, const KinematicHandModel& model, const PointCloud& cloud) {
  double deepest = 0.0;
  for (int l = 0; l < model.num_links(); ++l) {
    const auto& shape = model.links()[l].shape;
    if (shape.kind == ShapeKind::none) continue;
    const Rigid to_link = fk.link_world[l].inverse();
    for (const auto& p : cloud.points()) deepest = std::max(deepest, -shape.signed_distance(to_link.apply(p)));
  }
  return 1000.0 * deepest;
}

inline double penetration_cylinder(const HandPose& pose, const KinematicHandModel& model, const PointCloud& cloud) {
  return penetration_cylinder(forward_kinematics(model, pose), model, cloud);
}

/// Hand samples whose signed outside distance is <= epsilon, paired with the
/// nearest object sample; thinned to at most N per link by farthest-point
/// selection seeded at the lowest sample index.
inline ContactSet extract_contacts(const FkResult& fk, const KinematicHandModel& model, const KdTree& index,
                                   const EvalConfig& cfg) {
  ContactSet out;
  out.friction_mu = cfg.friction_mu;
  out.contact_epsilon = cfg.contact_epsilon;
  const auto& cloud = index.cloud();
  for (int l = 0; l < model.num_links(); ++l) {
    const std::size_t begin = model.link_point_offset(l);
    const std::size_t count = model.links()[l].surface_points.size();
    std::vector<Contact> cands;
    for (std::size_t i = begin; i < begin + count; ++i) {
      const auto sd = signed_distance_to_cloud(fk.world_points[i], index);
      if (-sd.signed_depth() <= cfg.contact_epsilon)
        cands.push_back(Contact{cloud.point(sd.neighbor), cloud.normal(sd.neighbor), l});
    }
    if (cands.empty()) continue;
    std::vector<std::size_t> chosen = {0};
    std::vector<double> dist(cands.size(), std::numeric_limits<double>::infinity());
    while (chosen.size() < std::min<std::size_t>(cands.size(), cfg.max_contacts_per_link)) {
      const auto& last = cands[chosen.back()].point;
      std::size_t best = 0;
      double best_d = -1.0;
      for (std::size_t k = 0; k < cands.size(); ++k) {
        dist[k] = std::min(dist[k], (cands[k].point - last).norm());
        if (dist[k] > best_d) {
          best_d = dist[k];
          best = k;
        }
      }
      if (best_d <= 0.0) break;  // only duplicates remain
      chosen.push_back(best);
    }
    std::sort(chosen.begin(), chosen.end());
    for (auto k : chosen) out.contacts.push_back(cands[k]);
  }
  return out;
}

inline ContactSet extract_contacts(const HandPose& pose, const KinematicHandModel& model, const KdTree& index,
                                   const EvalConfig& cfg) {
  return extract_contacts(forward_kinematics(model, pose), model, index, cfg);
}

/// Unit tangent pair completing the normal to a right-handed frame.
inline std::pair<Vec3, Vec3> tangent_basis(const Vec3& n) {
  Eigen::Index k = 0;
  n.cwiseAbs().minCoeff(&k);
  const Vec3 a = Vec3::Unit(k);
  const Vec3 t1 = n.cross(a).normalized();
  const Vec3 t2 = n.cross(t1);
  return {t1, t2};
}

/// Linearized friction cone edges n + mu (cos phi_k t1 + sin phi_k t2).
inline std::vector<Vec3> friction_cone_edges(const Vec3& normal, double mu, int edges) {
  const auto [t1, t2] = tangent_basis(normal);
  std::vector<Vec3> out;
  for (int k = 0; k < edges; ++k) {
    const double phi = 2.0 * std::numbers::pi * k / edges;
    out.push_back(normal + mu * (std::cos(phi) * t1 + std::sin(phi) * t2));
  }
  return out;
}

/// Columns of the contact force (and optionally torque) generator matrix.
inline Eigen::MatrixXd contact_generators(const ContactSet& cs, int edges, bool wrench) {
  const Eigen::Index rows = wrench ? 6 : 3;
  Eigen::MatrixXd G(rows, static_cast<Eigen::Index>(cs.contacts.size()) * edges);
  Eigen::Index col = 0;
  for (const auto& c : cs.contacts) {
    for (const auto& e : friction_cone_edges(c.normal, cs.friction_mu, edges)) {
      G.col(col).head<3>() = e;
      if (wrench) G.col(col).tail<3>() = c.point.cross(e);
      ++col;
    }
  }
  return G;
}

/// Quasi-static proxy: can non-negative cone-edge forces cancel a unit load
/// applied along `direction`? The contact normals are outward object normals,
/// so a load pressing the hand into a contact is resisted. Torque balance is
/// only required in wrench mode.
inline bool resists_force(const ContactSet& cs, const Vec3& direction, int edges = 8, bool wrench = false) {
  if (cs.contacts.empty()) return false;
  const Eigen::MatrixXd G = contact_generators(cs, edges, wrench);
  Eigen::VectorXd target = Eigen::VectorXd::Zero(G.rows());
  target.head<3>() = -direction;
  return find_nonnegative_solution(G, target).feasible;
}

inline const std::array<Vec3, 6>& axis_directions() {
  static const std::array<Vec3, 6> dirs = {Vec3(1, 0, 0), Vec3(-1, 0, 0), Vec3(0, 1, 0),
                                           Vec3(0, -1, 0), Vec3(0, 0, 1), Vec3(0, 0, -1)};
  return dirs;
}

struct SuccessLabels {
  std::array<bool, 6> resisted{};  // +x, -x, +y, -y, +z, -z
  bool suc6 = false;
  bool suc1 = false;
};

inline SuccessLabels success_labels(const ContactSet& cs, const EvalConfig& cfg) {
  SuccessLabels s;
  int count = 0;
  for (std::size_t k = 0; k < 6; ++k) {
    s.resisted[k] = resists_force(cs, axis_directions()[k], cfg.cone_edges, cfg.wrench);
    count += s.resisted[k];
  }
  s.suc6 = count == 6;
  s.suc1 = count >= 1;
  return s;
}

inline SuccessLabels success_labels(const HandPose& pose, const KinematicHandModel& model, const KdTree& index,
                                    const EvalConfig& cfg) {
  return success_labels(extract_contacts(pose, model, index, cfg), cfg);
}

/// Mean over pose dimensions of the population standard deviation across
/// successful poses. Fewer than two successes gives 0.
inline double diversity(const std::vector<HandPose>& poses, const std::vector<bool>& successes) {
  require(poses.size() == successes.size(), "diversity: poses/successes length mismatch");
  std::vector<const HandPose*> ok;
  for (std::size_t i = 0; i < poses.size(); ++i)
    if (successes[i]) ok.push_back(&poses[i]);
  if (ok.size() < 2) return 0.0;
  const auto n = ok.front()->values.size();
  Vec mean = Vec::Zero(n);
  for (auto* p : ok) {
    require(p->values.size() == n, "diversity: inconsistent pose dimensions");
    mean += p->values;
  }
  mean /= static_cast<double>(ok.size());
  Vec var = Vec::Zero(n);
  for (auto* p : ok) var.array() += (p->values - mean).array().square();
  var /= static_cast<double>(ok.size());
  return var.cwiseSqrt().mean();
}

enum class RejectReason { pen_nn, pen_cyl, not_stable };

inline const char* reason_code(RejectReason r) {
  switch (r) {
    case RejectReason::pen_nn: return "PEN_NN";
    case RejectReason::pen_cyl: return "PEN_CYL";
    case RejectReason::not_stable: return "NOT_STABLE";
  }
  return "UNKNOWN";
}

struct EvalReport {
  double pen_mm = 0.0;      // hand-into-object, nearest-neighbor method
  double pen_cyl_mm = 0.0;  // object-into-hand, link-shape method
  bool suc6 = false;
  bool suc1 = false;
  std::size_t num_contacts = 0;
  bool accepted = false;
  std::vector<RejectReason> reasons;
};

/// Accept/reject rule: stable in all six directions, hand-into-object
/// penetration below the nn limit and object-into-hand below the shape limit.
inline void apply_filter_verdict(EvalReport& r, const EvalConfig& cfg) {
  r.reasons.clear();
  if (!(r.pen_mm < cfg.pen_nn_limit_mm)) r.reasons.push_back(RejectReason::pen_nn);
  if (!(r.pen_cyl_mm < cfg.pen_cyl_limit_mm)) r.reasons.push_back(RejectReason::pen_cyl);
  if (!r.suc6) r.reasons.push_back(RejectReason::not_stable);
  r.accepted = r.reasons.empty();
}

inline EvalReport evaluate_grasp(const HandPose& pose, const KinematicHandModel& model, const KdTree& index,
                                 const EvalConfig& cfg) {
  const FkResult fk = forward_kinematics(model, pose);
  EvalReport r;
  r.pen_mm = penetration_nn(fk, index);
  r.pen_cyl_mm = penetration_cylinder(fk, model, index.cloud());
  const ContactSet cs = extract_contacts(fk, model, index, cfg);
  r.num_contacts = cs.contacts.size();
  const SuccessLabels s = success_labels(cs, cfg);
  r.suc6 = s.suc6;
  r.suc1 = s.suc1;
  apply_filter_verdict(r, cfg);
  return r;
}

inline std::pair<bool, EvalReport> filter_grasp(const HandPose& pose, const KinematicHandModel& model,
                                                const KdTree& index, const EvalConfig& cfg) {
  EvalReport r = evaluate_grasp(pose, model, index, cfg);
  return {r.accepted, r};
}

}  // namespace dgforge
