#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "oracles.hpp"

using namespace dgforge;

namespace {

PointCloud random_cloud(std::size_t n, std::uint64_t seed) {
  CounterRng r(seed);
  std::vector<Vec3> p, nn;
  for (std::size_t i = 0; i < n; ++i) {
    p.emplace_back(r.uniform(-1, 1), r.uniform(-1, 1), r.uniform(-1, 1));
    nn.push_back(Vec3(r.normal(), r.normal(), r.normal()).normalized());
  }
  return PointCloud(p, nn);
}

PointCloud cloud_of(const std::vector<Vec3>& pts) {
  return PointCloud(pts, std::vector<Vec3>(pts.size(), Vec3::UnitZ()));
}

}  // namespace

TEST(PointCloud, RejectsBadInput) {
  EXPECT_THROW(PointCloud({}, {}), ValidationError);
  EXPECT_THROW(PointCloud({Vec3::Zero()}, {Vec3(0, 0, 2)}), ValidationError);
  EXPECT_THROW(PointCloud({Vec3::Zero()}, {}), ValidationError);
}

TEST(KdTree, SinglePointAlwaysIndexZero) {
  const auto c = cloud_of({Vec3(1, 2, 3)});
  KdTree t(c);
  EXPECT_EQ(t.nearest(Vec3(-5, 0, 9)).index, 0u);
}

TEST(KdTree, TwoPointArithmetic) {
  const auto c = cloud_of({Vec3(0, 0, 0), Vec3(1, 0, 0)});
  KdTree t(c);
  const auto n = t.nearest(Vec3(0.2, 0, 0));
  EXPECT_EQ(n.index, 0u);
  EXPECT_DOUBLE_EQ(n.distance, 0.2);
}

TEST(KdTree, TieGoesToLowestIndex) {
  std::vector<Vec3> p;
  for (int i = 0; i < 10; ++i) p.emplace_back(5.0 + i, 5.0, 5.0);
  p[3] = Vec3(-0.5, 0, 0);
  p[7] = Vec3(0.5, 0, 0);
  const auto c = cloud_of(p);
  for (std::size_t leaf : {1u, 2u, 8u}) {
    KdTree t(c, leaf);
    const auto n = t.nearest(Vec3::Zero());
    EXPECT_EQ(n.index, 3u);
    EXPECT_DOUBLE_EQ(n.distance, 0.5);
  }
}

TEST(KdTree, QueryAtStoredPoint) {
  const auto c = random_cloud(500, 4);
  KdTree t(c);
  for (std::size_t k : {0u, 17u, 499u}) {
    const auto n = t.nearest(c.point(k));
    EXPECT_EQ(n.index, k);
    EXPECT_EQ(n.distance, 0.0);
  }
}

TEST(KdTree, MatchesLinearScan) {
  const auto c = random_cloud(1000, 5);
  KdTree t(c);
  CounterRng r(6);
  for (int i = 0; i < 1000; ++i) {
    const Vec3 q(r.uniform(-1.2, 1.2), r.uniform(-1.2, 1.2), r.uniform(-1.2, 1.2));
    const auto a = t.nearest(q);
    const auto b = oracle::nearest_scan(c.points(), q);
    ASSERT_EQ(a.index, b.index);
    ASSERT_EQ(a.squared, b.squared);
    EXPECT_EQ(nearest_linear(c.points(), q).index, b.index);
  }
}

TEST(KdTree, DuplicatePointsKeepLowestIndex) {
  std::vector<Vec3> p(20, Vec3(0.1, 0.2, 0.3));
  const auto c = cloud_of(p);
  KdTree t(c, 2);
  EXPECT_EQ(t.nearest(Vec3::Zero()).index, 0u);
}

TEST(SignedDistance, SignFromNeighborNormal) {
  const auto c = cloud_of({Vec3::Zero()});
  KdTree t(c);
  auto in = signed_distance_to_cloud(Vec3(0, 0, -0.01), t);
  EXPECT_EQ(in.sign, 1);
  EXPECT_DOUBLE_EQ(in.distance, 0.01);
  auto out = signed_distance_to_cloud(Vec3(0, 0, 0.01), t);
  EXPECT_EQ(out.sign, -1);
  EXPECT_DOUBLE_EQ(out.distance, 0.01);
  auto on = signed_distance_to_cloud(Vec3::Zero(), t);
  EXPECT_EQ(on.sign, 1);
  EXPECT_EQ(on.distance, 0.0);
}

TEST(SignedDistance, ReflectionFlipsSign) {
  const auto c = random_cloud(300, 8);
  KdTree t(c);
  CounterRng r(9);
  int checked = 0;
  for (int i = 0; i < 500; ++i) {
    const Vec3 q(r.uniform(-1, 1), r.uniform(-1, 1), r.uniform(-1, 1));
    const auto a = signed_distance_to_cloud(q, t);
    const Vec3 x = c.point(a.neighbor), n = c.normal(a.neighbor);
    const Vec3 refl = q - 2.0 * (q - x).dot(n) * n;
    const auto b = signed_distance_to_cloud(refl, t);
    if (b.neighbor != a.neighbor || std::abs((q - x).dot(n)) < 1e-9) continue;
    EXPECT_EQ(a.sign, -b.sign);
    ++checked;
  }
  EXPECT_GT(checked, 100);
}

TEST(CylinderSdf, ReferenceValues) {
  const CylinderGeom cyl{Vec3::Zero(), Vec3(0, 0, 1), 0.1};
  EXPECT_NEAR(signed_distance_to_cylinder(Vec3(0.1, 0, 0.5), cyl), 0.0, 1e-15);
  EXPECT_NEAR(signed_distance_to_cylinder(Vec3(0, 0, 0.5), cyl), -0.1, 1e-15);
  EXPECT_NEAR(signed_distance_to_cylinder(Vec3(0.3, 0, 0.5), cyl), 0.2, 1e-15);
  EXPECT_NEAR(signed_distance_to_cylinder(Vec3(0, 0, 1.5), cyl), 0.5, 1e-15);
  EXPECT_NEAR(signed_distance_to_cylinder(Vec3(0.4, 0, 1.4), cyl), 0.5, 1e-15);
}

TEST(CylinderSdf, OneLipschitz) {
  const CylinderGeom cyl{Vec3(0.1, -0.2, 0), Vec3(0.3, 0.1, 0.4), 0.07};
  CounterRng r(10);
  for (int i = 0; i < 5000; ++i) {
    const Vec3 p(r.uniform(-1, 1), r.uniform(-1, 1), r.uniform(-1, 1));
    const Vec3 q(r.uniform(-1, 1), r.uniform(-1, 1), r.uniform(-1, 1));
    EXPECT_LE(std::abs(signed_distance_to_cylinder(p, cyl) - signed_distance_to_cylinder(q, cyl)),
              (p - q).norm() + 1e-12);
  }
}

TEST(CylinderSdf, RejectsDegenerateAxis) {
  CylinderGeom c{Vec3::Zero(), Vec3::Zero(), 0.1};
  EXPECT_THROW(c.validate(), ValidationError);
}

TEST(BoxSdf, ReferenceValues) {
  const BoxGeom b{Vec3(1, 0, 0), Vec3(0.5, 0.2, 0.1)};
  EXPECT_NEAR(signed_distance_to_box(Vec3(1, 0, 0), b), -0.1, 1e-15);
  EXPECT_NEAR(signed_distance_to_box(Vec3(2, 0, 0), b), 0.5, 1e-15);
  EXPECT_NEAR(signed_distance_to_box(Vec3(1.5 + 0.3, 0.2 + 0.4, 0), b), 0.5, 1e-15);
}
