#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "dgforge/error.hpp"

namespace dgforge {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Object surface samples with outward unit normals (meters).
class PointCloud {
 public:
  PointCloud() = default;
  PointCloud(std::vector<Vec3> points, std::vector<Vec3> normals)
      : points_(std::move(points)), normals_(std::move(normals)) {
    require(!points_.empty(), "point cloud must be non-empty");
    require(points_.size() == normals_.size(), "point cloud: points/normals length mismatch");
    for (const auto& n : normals_) {
      require(std::abs(n.norm() - 1.0) <= 1e-6, "point cloud: normal is not unit length");
    }
  }

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  const std::vector<Vec3>& points() const { return points_; }
  const std::vector<Vec3>& normals() const { return normals_; }
  const Vec3& point(std::size_t i) const { return points_[i]; }
  const Vec3& normal(std::size_t i) const { return normals_[i]; }

  /// Keeps the given indices, in the given order.
  PointCloud subset(std::span<const std::size_t> idx) const {
    std::vector<Vec3> p, n;
    p.reserve(idx.size());
    n.reserve(idx.size());
    for (auto i : idx) {
      p.push_back(points_[i]);
      n.push_back(normals_[i]);
    }
    return PointCloud(std::move(p), std::move(n));
  }

 private:
  std::vector<Vec3> points_;
  std::vector<Vec3> normals_;
};

inline double squared_distance(const Vec3& a, const Vec3& b) {
  const double dx = a.x() - b.x();
  const double dy = a.y() - b.y();
  const double dz = a.z() - b.z();
  return dx * dx + dy * dy + dz * dz;
}

struct Neighbor {
  std::size_t index = 0;
  double distance = 0.0;
  double squared = 0.0;
};

/// Exhaustive scan; ties go to the lowest index.
inline Neighbor nearest_linear(std::span<const Vec3> points, const Vec3& q) {
  Neighbor best{0, 0.0, std::numeric_limits<double>::infinity()};
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double d2 = squared_distance(points[i], q);
    if (d2 < best.squared) {
      best.squared = d2;
      best.index = i;
    }
  }
  best.distance = std::sqrt(best.squared);
  return best;
}

/// Exact nearest-neighbor k-d tree over a PointCloud.
///
/// Distances are computed with the same expression as nearest_linear, so the
/// results (index and distance) are bitwise identical to an exhaustive scan.
/// The tree holds a pointer to the cloud; the cloud must outlive it.
class KdTree {
 public:
  explicit KdTree(const PointCloud& cloud, std::size_t leaf_size = 8)
      : cloud_(&cloud), leaf_size_(std::max<std::size_t>(1, leaf_size)) {
    require(!cloud.empty(), "cannot build spatial index over an empty cloud");
    order_.resize(cloud.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    nodes_.reserve(2 * cloud.size() / leaf_size_ + 1);
    build(0, order_.size());
  }
  KdTree(PointCloud&&, std::size_t = 8) = delete;

  const PointCloud& cloud() const { return *cloud_; }

  Neighbor nearest(const Vec3& q) const {
    Neighbor best{0, 0.0, std::numeric_limits<double>::infinity()};
    search(0, q, best);
    best.distance = std::sqrt(best.squared);
    return best;
  }

 private:
  struct Node {
    std::size_t begin = 0, end = 0;  // range in order_ (leaves)
    int axis = -1;                   // -1 marks a leaf
    double split = 0.0;
    std::size_t left = 0, right = 0;
  };

  std::size_t build(std::size_t begin, std::size_t end) {
    const std::size_t id = nodes_.size();
    nodes_.push_back(Node{begin, end});
    if (end - begin <= leaf_size_) return id;

    const auto& pts = cloud_->points();
    Vec3 lo = pts[order_[begin]], hi = lo;
    for (std::size_t i = begin; i < end; ++i) {
      lo = lo.cwiseMin(pts[order_[i]]);
      hi = hi.cwiseMax(pts[order_[i]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    if (hi[axis] - lo[axis] <= 0.0) return id;  // all coincident: keep as leaf

    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                     order_.begin() + static_cast<std::ptrdiff_t>(mid),
                     order_.begin() + static_cast<std::ptrdiff_t>(end),
                     [&](std::size_t a, std::size_t b) { return pts[a][axis] < pts[b][axis]; });
    const double split = pts[order_[mid]][axis];
    const std::size_t l = build(begin, mid);
    const std::size_t r = build(mid, end);
    Node& n = nodes_[id];
    n.axis = axis;
    n.split = split;
    n.left = l;
    n.right = r;
    return id;
  }

  void search(std::size_t id, const Vec3& q, Neighbor& best) const {
    const Node& n = nodes_[id];
    if (n.axis < 0) {
      const auto& pts = cloud_->points();
      for (std::size_t i = n.begin; i < n.end; ++i) {
        const std::size_t k = order_[i];
        const double d2 = squared_distance(pts[k], q);
        if (d2 < best.squared || (d2 == best.squared && k < best.index)) {
          best.squared = d2;
          best.index = k;
        }
      }
      return;
    }
    // Left subtree holds coordinates <= split, right holds >= split.
    const double diff = q[n.axis] - n.split;
    const std::size_t near = diff <= 0.0 ? n.left : n.right;
    const std::size_t far = diff <= 0.0 ? n.right : n.left;
    search(near, q, best);
    // Equal-distance candidates may still win on index, so prune strictly.
    if (diff * diff <= best.squared) search(far, q, best);
  }

  const PointCloud* cloud_;
  std::size_t leaf_size_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

/// Signed nearest-neighbor distance of a hand point to an object cloud.
/// sign = +1 means the point is on the inner side of the nearest surface
/// sample (penetrating); sign(0) is taken as +1.
struct SignedDistance {
  int sign = 1;
  double distance = 0.0;
  std::size_t neighbor = 0;
  double signed_depth() const { return sign * distance; }
};

inline SignedDistance signed_distance_to_cloud(const Vec3& hand_point, const KdTree& index) {
  const Neighbor nn = index.nearest(hand_point);
  const auto& cloud = index.cloud();
  const double dot = (cloud.point(nn.index) - hand_point).dot(cloud.normal(nn.index));
  return SignedDistance{dot >= 0.0 ? 1 : -1, nn.distance, nn.index};
}

/// Capped solid cylinder between two axis endpoints.
struct CylinderGeom {
  Vec3 axis_start = Vec3::Zero();
  Vec3 axis_end = Vec3::UnitZ();
  double radius = 0.01;

  void validate() const {
    require((axis_end - axis_start).norm() > 0.0, "cylinder: axis_start equals axis_end");
    require(radius > 0.0, "cylinder: radius must be positive");
  }

  double length() const { return (axis_end - axis_start).norm(); }
};

/// Exact signed distance to the capped cylinder surface (negative inside).
inline double signed_distance_to_cylinder(const Vec3& p, const CylinderGeom& cyl) {
  const Vec3 axis = cyl.axis_end - cyl.axis_start;
  const double len = axis.norm();
  const Vec3 u = axis / len;
  const Vec3 x = p - cyl.axis_start;
  const double h = x.dot(u);
  const double radial = (x - h * u).norm();
  const double dr = radial - cyl.radius;
  const double dh = std::max(-h, h - len);
  if (dr <= 0.0 && dh <= 0.0) return std::max(dr, dh);
  const double a = std::max(dr, 0.0);
  const double b = std::max(dh, 0.0);
  return std::sqrt(a * a + b * b);
}

/// Axis-aligned box in its own frame, used for the palm.
struct BoxGeom {
  Vec3 center = Vec3::Zero();
  Vec3 half_extents = Vec3::Constant(0.01);

  void validate() const {
    require((half_extents.array() > 0.0).all(), "box: half extents must be positive");
  }
};

inline double signed_distance_to_box(const Vec3& p, const BoxGeom& box) {
  const Vec3 q = (p - box.center).cwiseAbs() - box.half_extents;
  const double outside = q.cwiseMax(0.0).norm();
  const double inside = std::min(q.maxCoeff(), 0.0);
  return outside + inside;
}

/// Rigid transform helper: x -> R x + t.
struct Rigid {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  Vec3 apply(const Vec3& x) const { return R * x + t; }
  Rigid compose(const Rigid& other) const { return Rigid{R * other.R, R * other.t + t}; }
  Rigid inverse() const { return Rigid{R.transpose(), -(R.transpose() * t)}; }
};

}  // namespace dgforge
