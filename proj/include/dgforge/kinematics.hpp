#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "dgforge/error.hpp"
#include "dgforge/geometry.hpp"

namespace dgforge {

using Vec = Eigen::VectorXd;

/// Grasp parameters h = (theta, rot6d, trans), stored flat as the diffusion
/// state. rot6d holds the first two columns of the global rotation.
struct HandPose {
  Vec values;

  HandPose() = default;
  explicit HandPose(Vec v) : values(std::move(v)) {
    require(values.size() >= 9, "hand pose must have at least 9 entries");
  }

  static HandPose identity(int num_joints) {
    Vec v = Vec::Zero(num_joints + 9);
    v[num_joints + 0] = 1.0;
    v[num_joints + 4] = 1.0;
    return HandPose(std::move(v));
  }

  static HandPose from_parts(const Vec& theta, const Mat3& R, const Vec3& t) {
    const auto k = theta.size();
    Vec v(k + 9);
    v.head(k) = theta;
    v.segment<3>(k) = R.col(0);
    v.segment<3>(k + 3) = R.col(1);
    v.segment<3>(k + 6) = t;
    return HandPose(std::move(v));
  }

  int dim() const { return static_cast<int>(values.size()); }
  int num_joints() const { return dim() - 9; }
  auto theta() { return values.head(num_joints()); }
  auto theta() const { return values.head(num_joints()); }
  auto rot6d() { return values.segment<6>(num_joints()); }
  auto rot6d() const { return values.segment<6>(num_joints()); }
  auto trans() { return values.segment<3>(num_joints() + 6); }
  auto trans() const { return values.segment<3>(num_joints() + 6); }
};

/// Gram-Schmidt on the two stored columns.
///   b1 = normalize(a1); b2 = normalize(a2 - (a2.b1) b1); b3 = b1 x b2.
/// When `dcols` is given it receives d b_k / d(rot6d) as three 3x6 blocks.
inline Mat3 orthonormalize_rot6d(const Eigen::Ref<const Eigen::Matrix<double, 6, 1>>& r6,
                                 std::array<Eigen::Matrix<double, 3, 6>, 3>* dcols = nullptr) {
  const Vec3 a1 = r6.head<3>();
  const Vec3 a2 = r6.tail<3>();
  const double n1 = a1.norm();
  if (!(n1 > 1e-8)) throw ValidationError("rot6d: first column has near-zero norm");
  const Vec3 b1 = a1 / n1;
  const double proj = a2.dot(b1);
  const Vec3 u = a2 - proj * b1;
  const double nu = u.norm();
  if (!(nu > 1e-8)) throw ValidationError("rot6d: columns are (nearly) colinear");
  const Vec3 b2 = u / nu;
  const Vec3 b3 = b1.cross(b2);

  Mat3 R;
  R.col(0) = b1;
  R.col(1) = b2;
  R.col(2) = b3;

  if (dcols) {
    const Mat3 I = Mat3::Identity();
    const Mat3 db1_da1 = (I - b1 * b1.transpose()) / n1;
    // u = a2 - (a2.b1) b1
    const Mat3 du_db1 = -(b1 * a2.transpose() + proj * I);
    const Mat3 du_da1 = du_db1 * db1_da1;
    const Mat3 du_da2 = I - b1 * b1.transpose();
    const Mat3 db2_du = (I - b2 * b2.transpose()) / nu;
    const Mat3 db2_da1 = db2_du * du_da1;
    const Mat3 db2_da2 = db2_du * du_da2;
    auto skew = [](const Vec3& v) {
      Mat3 S;
      S << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
      return S;
    };
    // d(b1 x b2) = db1 x b2 + b1 x db2 = -[b2]x db1 + [b1]x db2
    const Mat3 db3_da1 = -skew(b2) * db1_da1 + skew(b1) * db2_da1;
    const Mat3 db3_da2 = skew(b1) * db2_da2;
    auto& d = *dcols;
    d[0].leftCols<3>() = db1_da1;
    d[0].rightCols<3>().setZero();
    d[1].leftCols<3>() = db2_da1;
    d[1].rightCols<3>() = db2_da2;
    d[2].leftCols<3>() = db3_da1;
    d[2].rightCols<3>() = db3_da2;
  }
  return R;
}

struct JointSpec {
  Vec3 axis = Vec3::UnitX();  // unit, in the link's joint frame
  double lower = -1.0;
  double upper = 1.0;
};

enum class ShapeKind { none, cylinder, box };

struct LinkShape {
  ShapeKind kind = ShapeKind::none;
  CylinderGeom cylinder;
  BoxGeom box;

  double signed_distance(const Vec3& p_link) const {
    switch (kind) {
      case ShapeKind::cylinder: return signed_distance_to_cylinder(p_link, cylinder);
      case ShapeKind::box: return signed_distance_to_box(p_link, box);
      case ShapeKind::none: break;
    }
    return std::numeric_limits<double>::infinity();
  }
};

/// One rigid body of the hand. Its frame is parent_frame * origin * Rot(axis, q)
/// where q is the joint angle (0 for fixed links).
struct Link {
  std::string name;
  int parent = -1;  // -1: attached to the hand (global) frame
  Rigid origin;
  std::optional<JointSpec> joint;
  LinkShape shape;
  std::vector<Vec3> surface_points;       // link frame
  std::vector<std::size_t> inner_points;  // indices into surface_points
};

/// Articulated hand: links in topological order (parent index < own index).
class KinematicHandModel {
 public:
  KinematicHandModel() = default;
  explicit KinematicHandModel(std::vector<Link> links) : links_(std::move(links)) { finalize(); }

  const std::vector<Link>& links() const { return links_; }
  int num_links() const { return static_cast<int>(links_.size()); }
  int num_joints() const { return static_cast<int>(joint_link_.size()); }
  int pose_dim() const { return num_joints() + 9; }

  /// Link owning joint j.
  int joint_link(int j) const { return joint_link_[j]; }
  /// Joint index of a link, or -1 when the link is fixed.
  int link_joint(int l) const { return link_joint_[l]; }
  /// Joints whose motion moves link l (ancestors and itself), root first.
  const std::vector<int>& chain(int l) const { return chains_[l]; }
  /// Nearest ancestor that carries surface samples, or -1.
  int sampled_ancestor(int l) const { return sampled_ancestor_[l]; }

  std::size_t num_points() const { return point_link_.size(); }
  int point_link(std::size_t i) const { return point_link_[i]; }
  std::size_t link_point_offset(int l) const { return link_offset_[l]; }
  /// Global indices (into FK world_points) of the inner-surface samples.
  const std::vector<std::size_t>& inner_point_indices() const { return inner_global_; }

  std::size_t num_phalanges() const {
    std::size_t n = 0;
    for (const auto& l : links_) n += l.shape.kind == ShapeKind::cylinder;
    return n;
  }

  Vec lower_limits() const {
    Vec v(num_joints());
    for (int j = 0; j < num_joints(); ++j) v[j] = links_[joint_link_[j]].joint->lower;
    return v;
  }
  Vec upper_limits() const {
    Vec v(num_joints());
    for (int j = 0; j < num_joints(); ++j) v[j] = links_[joint_link_[j]].joint->upper;
    return v;
  }

  HandPose clamp_to_limits(HandPose pose) const {
    require(pose.dim() == pose_dim(), "clamp_to_limits: pose dimension mismatch");
    pose.theta() = pose.theta().cwiseMax(lower_limits()).cwiseMin(upper_limits());
    return pose;
  }

 private:
  void finalize() {
    require(!links_.empty(), "hand model has no links");
    const int n = num_links();
    link_joint_.assign(n, -1);
    chains_.assign(n, {});
    sampled_ancestor_.assign(n, -1);
    link_offset_.assign(n, 0);
    for (int l = 0; l < n; ++l) {
      auto& link = links_[l];
      require(link.parent < l && link.parent >= -1,
              "hand model: link '" + link.name + "' must reference an earlier parent");
      if (link.joint) {
        const double norm = link.joint->axis.norm();
        require(norm > 1e-12, "hand model: zero joint axis on '" + link.name + "'");
        link.joint->axis /= norm;
        require(link.joint->lower < link.joint->upper,
                "hand model: joint limits must satisfy lower < upper on '" + link.name + "'");
        link_joint_[l] = static_cast<int>(joint_link_.size());
        joint_link_.push_back(l);
      }
      if (link.shape.kind == ShapeKind::cylinder) link.shape.cylinder.validate();
      if (link.shape.kind == ShapeKind::box) link.shape.box.validate();
      for (auto i : link.inner_points)
        require(i < link.surface_points.size(),
                "hand model: inner point index out of range on '" + link.name + "'");

      if (link.parent >= 0) {
        chains_[l] = chains_[link.parent];
        const int p = link.parent;
        sampled_ancestor_[l] = links_[p].surface_points.empty() ? sampled_ancestor_[p] : p;
      }
      if (link.joint) chains_[l].push_back(link_joint_[l]);

      link_offset_[l] = point_link_.size();
      for (std::size_t i = 0; i < link.surface_points.size(); ++i) point_link_.push_back(l);
      for (auto i : link.inner_points) inner_global_.push_back(link_offset_[l] + i);
    }
  }

  std::vector<Link> links_;
  std::vector<int> joint_link_;
  std::vector<int> link_joint_;
  std::vector<std::vector<int>> chains_;
  std::vector<int> sampled_ancestor_;
  std::vector<int> point_link_;
  std::vector<std::size_t> link_offset_;
  std::vector<std::size_t> inner_global_;
};

struct FkResult {
  std::vector<Rigid> link_world;  // world pose of each link frame
  std::vector<Vec3> world_points;
  std::vector<CylinderGeom> world_cylinders;
  std::vector<int> cylinder_links;  // link id of each world cylinder
  /// Row block 3i..3i+2 is d(world_points[i]) / d(pose); empty unless requested.
  Eigen::MatrixXd jacobian;

  auto point_jacobian(std::size_t i) const {
    return jacobian.middleRows(static_cast<Eigen::Index>(3 * i), 3);
  }

  // Filled with the Jacobian: world joint axes/origins and d(R col k)/d(rot6d).
  std::vector<Vec3> joint_axis, joint_origin;
  std::array<Eigen::Matrix<double, 3, 6>, 3> rot_dcols{};
  Rigid global;

  /// Jacobian of a world point rigidly attached to link l (requires the
  /// Jacobian pass). `chain` is model.chain(l).
  Eigen::Matrix<double, 3, Eigen::Dynamic> attached_jacobian(const std::vector<int>& chain, const Vec3& x) const {
    Eigen::Matrix<double, 3, Eigen::Dynamic> J = Eigen::Matrix<double, 3, Eigen::Dynamic>::Zero(3, jacobian.cols());
    const auto K = static_cast<Eigen::Index>(joint_axis.size());
    for (int j : chain) J.col(j) = joint_axis[j].cross(x - joint_origin[j]);
    const Vec3 q = global.R.transpose() * (x - global.t);
    J.middleCols<6>(K) = q.x() * rot_dcols[0] + q.y() * rot_dcols[1] + q.z() * rot_dcols[2];
    J.middleCols<3>(K + 6).setIdentity();
    return J;
  }

  /// Pulls per-point gradients back to the pose: sum_i J_i^T g_i.
  Vec pullback(const std::vector<Vec3>& point_grads) const {
    Vec g = Vec::Zero(jacobian.cols());
    for (std::size_t i = 0; i < point_grads.size(); ++i) {
      if (point_grads[i].isZero(0.0)) continue;
      g.noalias() += point_jacobian(i).transpose() * point_grads[i];
    }
    return g;
  }
};

inline Mat3 axis_angle(const Vec3& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis).toRotationMatrix();
}

/// Forward kinematics to world-space samples with an optional analytic Jacobian.
inline FkResult forward_kinematics(const KinematicHandModel& model, const HandPose& pose,
                                   bool with_jacobian = false) {
  if (pose.dim() != model.pose_dim())
    throw ValidationError("forward_kinematics: pose has " + std::to_string(pose.dim()) +
                          " entries, model expects " + std::to_string(model.pose_dim()));
  const int K = model.num_joints();
  const int n = model.pose_dim();
  std::array<Eigen::Matrix<double, 3, 6>, 3> dcols;
  const Mat3 Rg = orthonormalize_rot6d(pose.rot6d(), with_jacobian ? &dcols : nullptr);
  const Vec3 tg = pose.trans();
  const Rigid global{Rg, tg};

  const auto& links = model.links();
  const int L = model.num_links();
  std::vector<Rigid> hand(L);                 // link frames in hand coordinates
  std::vector<Vec3> axis_h(K), origin_h(K);   // joint axes/origins in hand coordinates
  for (int l = 0; l < L; ++l) {
    const auto& link = links[l];
    const Rigid parent = link.parent >= 0 ? hand[link.parent] : Rigid{};
    Rigid joint_frame = parent.compose(link.origin);
    if (link.joint) {
      const int j = model.link_joint(l);
      axis_h[j] = joint_frame.R * link.joint->axis;
      origin_h[j] = joint_frame.t;
      joint_frame.R = joint_frame.R * axis_angle(link.joint->axis, pose.theta()[j]);
    }
    hand[l] = joint_frame;
  }

  FkResult out;
  out.link_world.resize(L);
  for (int l = 0; l < L; ++l) {
    out.link_world[l] = global.compose(hand[l]);
    if (links[l].shape.kind == ShapeKind::cylinder) {
      const auto& c = links[l].shape.cylinder;
      out.world_cylinders.push_back(CylinderGeom{out.link_world[l].apply(c.axis_start),
                                                 out.link_world[l].apply(c.axis_end), c.radius});
      out.cylinder_links.push_back(l);
    }
  }

  const std::size_t N = model.num_points();
  out.world_points.resize(N);
  out.global = global;
  if (with_jacobian) {
    out.jacobian = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(3 * N), n);
    out.rot_dcols = dcols;
    out.joint_axis.resize(K);
    out.joint_origin.resize(K);
    for (int j = 0; j < K; ++j) {
      out.joint_axis[j] = Rg * axis_h[j];
      out.joint_origin[j] = global.apply(origin_h[j]);
    }
  }
  std::size_t idx = 0;
  for (int l = 0; l < L; ++l) {
    for (const auto& local : links[l].surface_points) {
      const Vec3 q = hand[l].apply(local);
      out.world_points[idx] = Rg * q + tg;
      if (with_jacobian) {
        auto J = out.jacobian.middleRows(static_cast<Eigen::Index>(3 * idx), 3);
        for (int j : model.chain(l)) J.col(j) = Rg * axis_h[j].cross(q - origin_h[j]);
        J.middleCols<6>(K) = q.x() * dcols[0] + q.y() * dcols[1] + q.z() * dcols[2];
        J.middleCols<3>(K + 6).setIdentity();
      }
      ++idx;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Built-in simplified hand.

/// Parameters of the built-in hand. Finger 0 is an opposable thumb when
/// `thumb` is set; the remaining fingers sit in a row on top of the palm.
/// Lengths in meters, angles in radians.
struct HandSpec {
  int fingers = 5;
  int joints_per_finger = 4;       // abduction (optional) + flexion joints
  std::optional<bool> abduction;   // default: joints_per_finger >= 3
  std::optional<bool> thumb;       // default: fingers >= 2
  int wrist = 4;                   // 2 wrist joints, then metacarpal joints (thumb, last finger)

  double palm_half_width = 0.046;
  double palm_half_thickness = 0.012;
  double palm_length = 0.095;
  double finger_radius = 0.008;
  double finger_spacing = 0.026;
  std::vector<double> finger_lengths = {0.045, 0.028, 0.024};
  std::vector<double> thumb_lengths = {0.040, 0.030, 0.026};

  int sample_rings = 4;      // axial rings per phalange
  int sample_segments = 8;   // samples per ring; half lie on the palmar (-y) side
  int palm_grid_x = 4;
  int palm_grid_z = 8;

  double abduction_limit = 0.35;
  double flexion_lower = -0.15;
  double flexion_upper = 1.6;
  double wrist_limit = 0.6;
  double metacarpal_lower = -0.2;
  double metacarpal_upper = 0.8;

  bool has_abduction() const { return abduction.value_or(joints_per_finger >= 3); }
  bool has_thumb() const { return thumb.value_or(fingers >= 2); }
  int phalanges_per_finger() const { return joints_per_finger - (has_abduction() ? 1 : 0); }

  void validate() const {
    require(fingers >= 1, "hand: fingers must be >= 1");
    require(joints_per_finger >= 1, "hand: joints_per_finger must be >= 1");
    require(phalanges_per_finger() >= 1, "hand: need at least one flexion joint per finger");
    require(wrist >= 0 && wrist <= 4, "hand: wrist must be in [0, 4]");
    require(palm_half_width > 0 && palm_half_thickness > 0 && palm_length > 0,
            "hand: palm dimensions must be positive");
    require(finger_radius > 0 && finger_spacing > 0, "hand: finger radius/spacing must be positive");
    require(sample_rings >= 1 && sample_segments >= 2 && sample_segments % 2 == 0,
            "hand: sample_rings >= 1 and sample_segments even >= 2 required");
    require(palm_grid_x >= 1 && palm_grid_z >= 1, "hand: palm grid must be >= 1");
    for (double v : finger_lengths) require(v > 0, "hand: finger lengths must be positive");
    for (double v : thumb_lengths) require(v > 0, "hand: thumb lengths must be positive");
    require(abduction_limit > 0 && wrist_limit > 0, "hand: limits must be positive");
    require(flexion_lower < flexion_upper && metacarpal_lower < metacarpal_upper,
            "hand: lower limits must be below upper limits");
  }
};

namespace hand_detail {

/// Lateral-surface samples of a cylinder along local +z; rings are placed at
/// (k + 0.5) / rings of the length and angles are offset by half a segment
/// so that exactly half of each ring has y < 0.
inline void cylinder_samples(double radius, double length, int rings, int segments, Link& link) {
  for (int r = 0; r < rings; ++r) {
    const double z = length * (r + 0.5) / rings;
    for (int s = 0; s < segments; ++s) {
      const double a = 2.0 * std::numbers::pi * (s + 0.5) / segments;
      const Vec3 p(radius * std::cos(a), radius * std::sin(a), z);
      if (p.y() < 0.0) link.inner_points.push_back(link.surface_points.size());
      link.surface_points.push_back(p);
    }
  }
}

inline std::vector<double> resize_lengths(const std::vector<double>& given, int count) {
  if (static_cast<int>(given.size()) == count) return given;
  double total = 0.0;
  for (double v : given) total += v;
  if (given.empty()) total = 0.095;
  return std::vector<double>(count, total / count);
}

inline Mat3 frame_from_z(const Vec3& z_dir, const Vec3& palmar_hint) {
  const Vec3 z = z_dir.normalized();
  // local -y is the palmar side
  Vec3 y = -(palmar_hint - palmar_hint.dot(z) * z).normalized();
  Vec3 x = y.cross(z);
  Mat3 R;
  R.col(0) = x;
  R.col(1) = y;
  R.col(2) = z;
  return R;
}

}  // namespace hand_detail

inline KinematicHandModel default_hand(const HandSpec& spec = {}) {
  using namespace hand_detail;
  spec.validate();
  std::vector<Link> links;
  int parent = -1;

  const int wrist_joints = std::min(spec.wrist, 2);
  for (int w = 0; w < wrist_joints; ++w) {
    Link l;
    l.name = w == 0 ? "wrist_flex" : "wrist_deviation";
    l.parent = parent;
    l.joint = JointSpec{w == 0 ? Vec3::UnitX() : Vec3::UnitY(), -spec.wrist_limit, spec.wrist_limit};
    links.push_back(l);
    parent = static_cast<int>(links.size()) - 1;
  }

  Link palm;
  palm.name = "palm";
  palm.parent = parent;
  palm.shape.kind = ShapeKind::box;
  palm.shape.box = BoxGeom{Vec3(0, 0, 0.5 * spec.palm_length),
                           Vec3(spec.palm_half_width, spec.palm_half_thickness, 0.5 * spec.palm_length)};
  for (int face = 0; face < 2; ++face) {
    const double y = face == 0 ? -spec.palm_half_thickness : spec.palm_half_thickness;
    for (int iz = 0; iz < spec.palm_grid_z; ++iz)
      for (int ix = 0; ix < spec.palm_grid_x; ++ix)
        palm.surface_points.emplace_back(
            spec.palm_half_width * (2.0 * (ix + 0.5) / spec.palm_grid_x - 1.0), y,
            spec.palm_length * (iz + 0.5) / spec.palm_grid_z);
  }
  links.push_back(palm);
  const int palm_id = static_cast<int>(links.size()) - 1;

  const bool thumb = spec.has_thumb();
  const int row_fingers = spec.fingers - (thumb ? 1 : 0);
  const int metacarpals = std::max(spec.wrist - 2, 0);

  for (int f = 0; f < spec.fingers; ++f) {
    const bool is_thumb = thumb && f == 0;
    const std::string prefix = is_thumb ? "thumb" : "finger" + std::to_string(f);
    Rigid base;
    if (is_thumb) {
      base.t = Vec3(spec.palm_half_width - 0.004, -spec.palm_half_thickness, 0.28 * spec.palm_length);
      base.R = frame_from_z(Vec3(0.55, -0.45, 0.70), Vec3(-1.0, -0.3, 0.2));
    } else {
      const int k = f - (thumb ? 1 : 0);
      const double x = (k - 0.5 * (row_fingers - 1)) * spec.finger_spacing;
      base.t = Vec3(-x, 0.0, spec.palm_length);  // finger 1 (index) next to the thumb side
    }

    int chain_parent = palm_id;
    // Metacarpal joints: the thumb gets the first, the last finger the second.
    const bool gets_metacarpal = (is_thumb && metacarpals >= 1) ||
                                 (!is_thumb && f == spec.fingers - 1 && metacarpals >= (thumb ? 2 : 1));
    Rigid pending = base;
    if (gets_metacarpal) {
      Link m;
      m.name = prefix + "_metacarpal";
      m.parent = chain_parent;
      m.origin = pending;
      m.joint = JointSpec{Vec3::UnitZ(), spec.metacarpal_lower, spec.metacarpal_upper};
      if (!is_thumb) m.joint->axis = -Vec3::UnitZ();
      links.push_back(m);
      chain_parent = static_cast<int>(links.size()) - 1;
      pending = Rigid{};
    }
    if (spec.has_abduction()) {
      Link a;
      a.name = prefix + "_abduction";
      a.parent = chain_parent;
      a.origin = pending;
      a.joint = JointSpec{Vec3::UnitY(), -spec.abduction_limit, spec.abduction_limit};
      links.push_back(a);
      chain_parent = static_cast<int>(links.size()) - 1;
      pending = Rigid{};
    }
    const auto lengths =
        resize_lengths(is_thumb ? spec.thumb_lengths : spec.finger_lengths, spec.phalanges_per_finger());
    for (int p = 0; p < spec.phalanges_per_finger(); ++p) {
      Link ph;
      ph.name = prefix + "_phalanx" + std::to_string(p);
      ph.parent = chain_parent;
      ph.origin = pending;
      ph.joint = JointSpec{Vec3::UnitX(), spec.flexion_lower, spec.flexion_upper};
      ph.shape.kind = ShapeKind::cylinder;
      ph.shape.cylinder = CylinderGeom{Vec3::Zero(), Vec3(0, 0, lengths[p]), spec.finger_radius};
      cylinder_samples(spec.finger_radius, lengths[p], spec.sample_rings, spec.sample_segments, ph);
      links.push_back(ph);
      chain_parent = static_cast<int>(links.size()) - 1;
      pending = Rigid{Mat3::Identity(), Vec3(0, 0, lengths[p])};
    }
  }
  return KinematicHandModel(std::move(links));
}

}  // namespace dgforge
