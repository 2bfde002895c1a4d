#include <gtest/gtest.h>

#include <sstream>

#include "fixtures.hpp"

using namespace dgforge;

TEST(SampleSurface, UnitCubeFaceCountsAreMultinomial) {
  const TriangleMesh cube = make_box_mesh(Vec3::Constant(0.5));
  const auto cloud = sample_surface(cube, 6000, 123);
  std::map<std::tuple<int, int, int>, int> counts;
  for (const auto& n : cloud.normals()) counts[{(int)std::lround(n.x()), (int)std::lround(n.y()), (int)std::lround(n.z())}]++;
  ASSERT_EQ(counts.size(), 6u);
  const double sigma = std::sqrt(6000.0 * (1.0 / 6) * (5.0 / 6));
  for (const auto& [k, c] : counts) EXPECT_LT(std::abs(c - 1000.0), 3.0 * sigma);
  for (std::size_t i = 0; i < cloud.size(); ++i)
    EXPECT_NEAR(cloud.point(i).cwiseAbs().maxCoeff(), 0.5, 1e-12);
}

TEST(SampleSurface, SingleTriangle) {
  TriangleMesh m;
  m.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)};
  m.faces = {{0, 1, 2}};
  const auto c = sample_surface(m, 500, 1);
  for (std::size_t i = 0; i < c.size(); ++i) {
    const Vec3& p = c.point(i);
    EXPECT_GE(p.x(), -1e-15);
    EXPECT_GE(p.y(), -1e-15);
    EXPECT_LE(p.x() + p.y(), 1.0 + 1e-12);
    EXPECT_EQ(p.z(), 0.0);
    EXPECT_EQ(c.normal(i), Vec3::UnitZ());
  }
}

TEST(SampleSurface, Deterministic) {
  const auto m = make_sphere_mesh(0.05, 2);
  const auto a = sample_surface(m, 300, 77), b = sample_surface(m, 300, 77), c = sample_surface(m, 300, 78);
  EXPECT_EQ(a.points(), b.points());
  EXPECT_NE(a.points(), c.points());
}

TEST(SampleSurface, RejectsEmptyMesh) {
  EXPECT_THROW(sample_surface(TriangleMesh{}, 10, 0), ValidationError);
}

TEST(Ply, AsciiRoundTrip) {
  const auto m = make_cylinder_mesh(0.02, 0.05);
  std::stringstream ss;
  write_ply(ss, m);
  const auto back = read_ply(ss);
  ASSERT_EQ(back.vertices.size(), m.vertices.size());
  ASSERT_EQ(back.faces, m.faces);
  for (std::size_t i = 0; i < m.vertices.size(); ++i) EXPECT_EQ(back.vertices[i], m.vertices[i]);
}

TEST(Ply, BinaryLittleEndianWithQuad) {
  std::string s = "ply\nformat binary_little_endian 1.0\nelement vertex 4\nproperty float x\nproperty float y\n"
                  "property float z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n";
  const float v[12] = {0, 0, 0, 1, 0, 0, 1, 1, 0, 0, 1, 0};
  s.append(reinterpret_cast<const char*>(v), sizeof v);
  s.push_back(4);
  const std::int32_t idx[4] = {0, 1, 2, 3};
  s.append(reinterpret_cast<const char*>(idx), sizeof idx);
  std::istringstream in(s);
  const auto d = read_ply(in);
  ASSERT_EQ(d.vertices.size(), 4u);
  EXPECT_EQ(d.vertices[2], Vec3(1, 1, 0));
  ASSERT_EQ(d.faces.size(), 2u);
}

TEST(Ply, RejectsMalformedInput) {
  std::istringstream bad("plx\n");
  EXPECT_THROW(read_ply(bad), ValidationError);
  std::istringstream range("ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\n"
                           "property float z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n"
                           "0 0 0\n3 0 1 2\n");
  EXPECT_THROW(read_ply(range), ValidationError);
}

TEST(ToyMeshes, SurfaceMatchesAnalyticDistance) {
  for (const auto& spec : {fixture::sphere_spec(), fixture::box_spec(), fixture::cylinder_spec()}) {
    const auto cloud = sample_surface(object_mesh(spec), 2000, 5);
    for (const auto& p : cloud.points()) EXPECT_LT(std::abs(object_sdf(spec, p)), 5e-4) << spec.id;
  }
}

TEST(ToyMeshes, OutwardNormals) {
  for (const auto& spec : {fixture::sphere_spec(), fixture::box_spec(), fixture::cylinder_spec()}) {
    const auto cloud = sample_surface(object_mesh(spec), 500, 6);
    for (std::size_t i = 0; i < cloud.size(); ++i)
      EXPECT_GT(object_sdf(spec, cloud.point(i) + 0.002 * cloud.normal(i)), 0.0) << spec.id;
  }
}
