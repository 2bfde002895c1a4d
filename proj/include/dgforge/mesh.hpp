#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <map>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "dgforge/error.hpp"
#include "dgforge/geometry.hpp"
#include "dgforge/rng.hpp"

namespace dgforge {

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::uint32_t, 3>> faces;

  Vec3 face_normal_unnormalized(std::size_t f) const {
    const auto& [a, b, c] = faces[f];
    return (vertices[b] - vertices[a]).cross(vertices[c] - vertices[a]);
  }
  double face_area(std::size_t f) const { return 0.5 * face_normal_unnormalized(f).norm(); }

  void append(const TriangleMesh& other) {
    const auto base = static_cast<std::uint32_t>(vertices.size());
    vertices.insert(vertices.end(), other.vertices.begin(), other.vertices.end());
    for (auto f : other.faces) faces.push_back({f[0] + base, f[1] + base, f[2] + base});
  }

  void transform(const Rigid& T) {
    for (auto& v : vertices) v = T.apply(v);
  }
};

// ---------------------------------------------------------------------------
// Primitive builders. All faces wind counter-clockwise seen from outside.

inline TriangleMesh make_box_mesh(const Vec3& half) {
  TriangleMesh m;
  for (int i = 0; i < 8; ++i) {
    m.vertices.emplace_back((i & 1 ? 1 : -1) * half.x(), (i & 2 ? 1 : -1) * half.y(),
                            (i & 4 ? 1 : -1) * half.z());
  }
  // (-x, +x, -y, +y, -z, +z), two triangles each
  m.faces = {{0, 4, 6}, {0, 6, 2}, {1, 3, 7}, {1, 7, 5}, {0, 1, 5}, {0, 5, 4},
             {2, 6, 7}, {2, 7, 3}, {0, 2, 3}, {0, 3, 1}, {4, 5, 7}, {4, 7, 6}};
  return m;
}

/// Icosphere obtained by repeated midpoint subdivision.
inline TriangleMesh make_sphere_mesh(double radius, int subdivisions = 3) {
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  TriangleMesh m;
  m.vertices = {{-1, phi, 0}, {1, phi, 0}, {-1, -phi, 0}, {1, -phi, 0},
                {0, -1, phi}, {0, 1, phi}, {0, -1, -phi}, {0, 1, -phi},
                {phi, 0, -1}, {phi, 0, 1}, {-phi, 0, -1}, {-phi, 0, 1}};
  m.faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
             {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
             {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
             {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (auto& v : m.vertices) v.normalize();
  for (int s = 0; s < subdivisions; ++s) {
    std::vector<std::array<std::uint32_t, 3>> next;
    std::map<std::uint64_t, std::uint32_t> cache;
    auto midpoint = [&](std::uint32_t a, std::uint32_t b) {
      const std::uint64_t key = (static_cast<std::uint64_t>(std::min(a, b)) << 32) | std::max(a, b);
      if (auto it = cache.find(key); it != cache.end()) return it->second;
      m.vertices.push_back((m.vertices[a] + m.vertices[b]).normalized());
      const auto id = static_cast<std::uint32_t>(m.vertices.size() - 1);
      cache.emplace(key, id);
      return id;
    };
    for (auto [a, b, c] : m.faces) {
      const auto ab = midpoint(a, b), bc = midpoint(b, c), ca = midpoint(c, a);
      next.push_back({a, ab, ca});
      next.push_back({b, bc, ab});
      next.push_back({c, ca, bc});
      next.push_back({ab, bc, ca});
    }
    m.faces = std::move(next);
  }
  for (auto& v : m.vertices) v *= radius;
  return m;
}

/// Closed cylinder along local z from z=0 to z=length (or centered when requested).
inline TriangleMesh make_cylinder_mesh(double radius, double length, int segments = 24,
                                       bool centered = false) {
  TriangleMesh m;
  const double z0 = centered ? -0.5 * length : 0.0;
  const double z1 = z0 + length;
  for (int i = 0; i < segments; ++i) {
    const double a = 2.0 * std::numbers::pi * i / segments;
    m.vertices.emplace_back(radius * std::cos(a), radius * std::sin(a), z0);
    m.vertices.emplace_back(radius * std::cos(a), radius * std::sin(a), z1);
  }
  const auto bottom = static_cast<std::uint32_t>(m.vertices.size());
  m.vertices.emplace_back(0, 0, z0);
  m.vertices.emplace_back(0, 0, z1);
  const auto top = bottom + 1;
  const auto n = static_cast<std::uint32_t>(segments);
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::uint32_t j = (i + 1) % n;
    const std::uint32_t b0 = 2 * i, t0 = 2 * i + 1, b1 = 2 * j, t1 = 2 * j + 1;
    m.faces.push_back({b0, b1, t1});
    m.faces.push_back({b0, t1, t0});
    m.faces.push_back({bottom, b1, b0});
    m.faces.push_back({top, t0, t1});
  }
  return m;
}

inline TriangleMesh make_cylinder_mesh(const CylinderGeom& cyl, int segments = 16) {
  TriangleMesh m = make_cylinder_mesh(cyl.radius, cyl.length(), segments);
  const Vec3 u = (cyl.axis_end - cyl.axis_start).normalized();
  const Mat3 R = Eigen::Quaterniond::FromTwoVectors(Vec3::UnitZ(), u).toRotationMatrix();
  m.transform(Rigid{R, cyl.axis_start});
  return m;
}

/// Box with edges and corners rounded to `radius` (0 < radius <= min half
/// extent). Each face is a grid whose outer rows bend onto the rounding.
inline TriangleMesh make_rounded_box_mesh(const Vec3& half, double radius, int arc_steps = 4) {
  require(radius > 0.0 && radius <= half.minCoeff(), "rounded box: radius must be in (0, min half extent]");
  const Vec3 inner = half - Vec3::Constant(radius);
  auto coords = [&](int axis) {
    std::vector<double> c;
    for (int j = arc_steps; j >= 1; --j) c.push_back(-inner[axis] - radius * std::tan(std::numbers::pi / 4 * j / arc_steps));
    c.push_back(-inner[axis]);
    if (inner[axis] > 0.0) c.push_back(inner[axis]);
    for (int j = 1; j <= arc_steps; ++j) c.push_back(inner[axis] + radius * std::tan(std::numbers::pi / 4 * j / arc_steps));
    return c;
  };
  TriangleMesh m;
  for (int a = 0; a < 3; ++a) {
    const int b = (a + 1) % 3, c = (a + 2) % 3;
    const auto cb = coords(b), cc = coords(c);
    for (int sign : {1, -1}) {
      const auto base = static_cast<std::uint32_t>(m.vertices.size());
      for (double u : cb) {
        for (double v : cc) {
          Vec3 g;
          g[a] = sign * half[a];
          g[b] = u;
          g[c] = v;
          const Vec3 core = g.cwiseMax(-inner).cwiseMin(inner);
          m.vertices.push_back(core + radius * (g - core).normalized());
        }
      }
      const auto nc = static_cast<std::uint32_t>(cc.size());
      for (std::uint32_t i = 0; i + 1 < cb.size(); ++i) {
        for (std::uint32_t j = 0; j + 1 < nc; ++j) {
          const std::uint32_t v00 = base + i * nc + j, v10 = v00 + nc, v01 = v00 + 1, v11 = v10 + 1;
          if (sign > 0) {
            m.faces.push_back({v00, v10, v11});
            m.faces.push_back({v00, v11, v01});
          } else {
            m.faces.push_back({v00, v11, v10});
            m.faces.push_back({v00, v01, v11});
          }
        }
      }
    }
  }
  return m;
}

/// Cylinder along z centered at the origin with both rims rounded to `radius`.
inline TriangleMesh make_rounded_cylinder_mesh(double cyl_radius, double half_length, double radius,
                                               int segments = 32, int arc_steps = 4) {
  require(radius > 0.0 && radius <= std::min(cyl_radius, half_length),
          "rounded cylinder: radius must be in (0, min(radius, half length)]");
  std::vector<std::pair<double, double>> profile;  // (rho, z), bottom to top, off-axis part
  const double rho = cyl_radius - radius, zc = half_length - radius;
  for (int k = 0; k <= arc_steps; ++k) {
    const double a = -std::numbers::pi / 2 + std::numbers::pi / 2 * k / arc_steps;
    profile.emplace_back(rho + radius * std::cos(a), -zc + radius * std::sin(a));
  }
  for (int k = 0; k <= arc_steps; ++k) {
    const double a = std::numbers::pi / 2 * k / arc_steps;
    profile.emplace_back(rho + radius * std::cos(a), zc + radius * std::sin(a));
  }
  std::erase_if(profile, [](const auto& p) { return p.first <= 0.0; });
  TriangleMesh m;
  for (const auto& [r, z] : profile) {
    for (int i = 0; i < segments; ++i) {
      const double a = 2.0 * std::numbers::pi * i / segments;
      m.vertices.emplace_back(r * std::cos(a), r * std::sin(a), z);
    }
  }
  const auto n = static_cast<std::uint32_t>(segments);
  const auto rings = static_cast<std::uint32_t>(profile.size());
  for (std::uint32_t k = 0; k + 1 < rings; ++k) {
    for (std::uint32_t i = 0; i < n; ++i) {
      const std::uint32_t j = (i + 1) % n;
      const std::uint32_t b0 = k * n + i, b1 = k * n + j, t0 = b0 + n, t1 = b1 + n;
      m.faces.push_back({b0, b1, t1});
      m.faces.push_back({b0, t1, t0});
    }
  }
  const auto bottom = static_cast<std::uint32_t>(m.vertices.size());
  m.vertices.emplace_back(0, 0, -half_length);
  m.vertices.emplace_back(0, 0, half_length);
  const std::uint32_t top = bottom + 1, last = (rings - 1) * n;
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::uint32_t j = (i + 1) % n;
    m.faces.push_back({bottom, j, i});
    m.faces.push_back({top, last + i, last + j});
  }
  return m;
}

// ---------------------------------------------------------------------------

/// Area-weighted surface sampling with face normals; deterministic per seed.
inline PointCloud sample_surface(const TriangleMesh& mesh, std::size_t n, std::uint64_t seed) {
  require(n >= 1, "sample_surface: n must be >= 1");
  require(!mesh.faces.empty(), "sample_surface: mesh has no faces");
  std::vector<double> cumulative(mesh.faces.size());
  double total = 0.0;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    total += mesh.face_area(f);
    cumulative[f] = total;
  }
  require(total > 0.0, "sample_surface: mesh has zero surface area");

  CounterRng rng(seed, 0x5a3f);
  std::vector<Vec3> pts, nrm;
  pts.reserve(n);
  nrm.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double target = rng.uniform() * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), target);
    std::size_t f = static_cast<std::size_t>(it - cumulative.begin());
    if (f >= mesh.faces.size()) f = mesh.faces.size() - 1;
    while (mesh.face_area(f) <= 0.0) f = (f + 1) % mesh.faces.size();
    const auto& [a, b, c] = mesh.faces[f];
    const double r1 = std::sqrt(rng.uniform());
    const double r2 = rng.uniform();
    const Vec3 p = (1.0 - r1) * mesh.vertices[a] + r1 * (1.0 - r2) * mesh.vertices[b] +
                   r1 * r2 * mesh.vertices[c];
    pts.push_back(p);
    nrm.push_back(mesh.face_normal_unnormalized(f).normalized());
  }
  return PointCloud(std::move(pts), std::move(nrm));
}

// ---------------------------------------------------------------------------
// PLY

namespace ply_detail {

enum class Scalar { i8, u8, i16, u16, i32, u32, f32, f64 };

inline Scalar parse_scalar(const std::string& s) {
  if (s == "char" || s == "int8") return Scalar::i8;
  if (s == "uchar" || s == "uint8") return Scalar::u8;
  if (s == "short" || s == "int16") return Scalar::i16;
  if (s == "ushort" || s == "uint16") return Scalar::u16;
  if (s == "int" || s == "int32") return Scalar::i32;
  if (s == "uint" || s == "uint32") return Scalar::u32;
  if (s == "float" || s == "float32") return Scalar::f32;
  if (s == "double" || s == "float64") return Scalar::f64;
  throw ValidationError("ply: unknown scalar type '" + s + "'");
}

inline std::size_t scalar_size(Scalar s) {
  switch (s) {
    case Scalar::i8:
    case Scalar::u8: return 1;
    case Scalar::i16:
    case Scalar::u16: return 2;
    case Scalar::i32:
    case Scalar::u32:
    case Scalar::f32: return 4;
    case Scalar::f64: return 8;
  }
  return 0;
}

struct Property {
  std::string name;
  bool is_list = false;
  Scalar count_type = Scalar::u8;
  Scalar type = Scalar::f32;
};

struct Element {
  std::string name;
  std::size_t count = 0;
  std::vector<Property> props;
};

template <typename T>
T load_raw(std::istream& in, bool swap) {
  std::array<char, sizeof(T)> buf{};
  in.read(buf.data(), sizeof(T));
  if (!in) throw ValidationError("ply: unexpected end of binary data");
  if (swap) std::reverse(buf.begin(), buf.end());
  T v;
  std::memcpy(&v, buf.data(), sizeof(T));
  return v;
}

inline double read_binary(std::istream& in, Scalar s, bool swap) {
  switch (s) {
    case Scalar::i8: return load_raw<std::int8_t>(in, swap);
    case Scalar::u8: return load_raw<std::uint8_t>(in, swap);
    case Scalar::i16: return load_raw<std::int16_t>(in, swap);
    case Scalar::u16: return load_raw<std::uint16_t>(in, swap);
    case Scalar::i32: return load_raw<std::int32_t>(in, swap);
    case Scalar::u32: return load_raw<std::uint32_t>(in, swap);
    case Scalar::f32: return load_raw<float>(in, swap);
    case Scalar::f64: return load_raw<double>(in, swap);
  }
  return 0.0;
}

}  // namespace ply_detail

/// Parsed PLY content: vertices, optional per-vertex normals, triangles.
/// Polygon faces with more than three corners are fan-triangulated.
struct PlyData {
  std::vector<Vec3> vertices;
  std::vector<Vec3> normals;  // empty when the file carries none
  std::vector<std::array<std::uint32_t, 3>> faces;

  TriangleMesh mesh() const { return TriangleMesh{vertices, faces}; }
};

inline PlyData read_ply(std::istream& in) {
  using namespace ply_detail;
  std::string line;
  if (!std::getline(in, line) || line.rfind("ply", 0) != 0) throw ValidationError("ply: missing magic");
  enum class Format { ascii, le, be } format = Format::ascii;
  bool have_format = false;
  std::vector<Element> elements;
  while (true) {
    if (!std::getline(in, line)) throw ValidationError("ply: header not terminated");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "end_header") break;
    if (word.empty() || word == "comment" || word == "obj_info") continue;
    if (word == "format") {
      std::string f;
      ls >> f;
      if (f == "ascii") format = Format::ascii;
      else if (f == "binary_little_endian") format = Format::le;
      else if (f == "binary_big_endian") format = Format::be;
      else throw ValidationError("ply: unknown format '" + f + "'");
      have_format = true;
    } else if (word == "element") {
      Element e;
      ls >> e.name >> e.count;
      if (!ls) throw ValidationError("ply: malformed element line");
      elements.push_back(std::move(e));
    } else if (word == "property") {
      if (elements.empty()) throw ValidationError("ply: property before element");
      Property p;
      std::string t;
      ls >> t;
      if (t == "list") {
        std::string ct, it;
        ls >> ct >> it >> p.name;
        p.is_list = true;
        p.count_type = parse_scalar(ct);
        p.type = parse_scalar(it);
      } else {
        p.type = parse_scalar(t);
        ls >> p.name;
      }
      if (!ls) throw ValidationError("ply: malformed property line");
      elements.back().props.push_back(p);
    } else {
      throw ValidationError("ply: unexpected header keyword '" + word + "'");
    }
  }
  if (!have_format) throw ValidationError("ply: missing format line");

  const bool host_le = std::endian::native == std::endian::little;
  const bool swap = (format == Format::le && !host_le) || (format == Format::be && host_le);

  PlyData out;
  for (const auto& e : elements) {
    std::vector<std::vector<double>> rows(e.count);
    for (std::size_t r = 0; r < e.count; ++r) {
      auto& row = rows[r];
      if (format == Format::ascii) {
        if (!std::getline(in, line)) throw ValidationError("ply: truncated " + e.name + " data");
        std::istringstream ls(line);
        for (const auto& p : e.props) {
          double v = 0;
          if (p.is_list) {
            std::size_t cnt = 0;
            if (!(ls >> cnt)) throw ValidationError("ply: bad list count in " + e.name);
            row.push_back(static_cast<double>(cnt));
            for (std::size_t k = 0; k < cnt; ++k) {
              if (!(ls >> v)) throw ValidationError("ply: bad list entry in " + e.name);
              row.push_back(v);
            }
          } else {
            if (!(ls >> v)) throw ValidationError("ply: bad value in " + e.name);
            row.push_back(v);
          }
        }
      } else {
        for (const auto& p : e.props) {
          if (p.is_list) {
            const auto cnt = static_cast<std::size_t>(read_binary(in, p.count_type, swap));
            row.push_back(static_cast<double>(cnt));
            for (std::size_t k = 0; k < cnt; ++k) row.push_back(read_binary(in, p.type, swap));
          } else {
            row.push_back(read_binary(in, p.type, swap));
          }
        }
      }
    }

    auto column = [&](const std::string& name) -> int {
      int col = 0;
      for (const auto& p : e.props) {
        if (p.is_list) return -1;  // scalar columns must precede lists
        if (p.name == name) return col;
        ++col;
      }
      return -1;
    };
    if (e.name == "vertex") {
      const int x = column("x"), y = column("y"), z = column("z");
      if (x < 0 || y < 0 || z < 0) throw ValidationError("ply: vertex element lacks x/y/z");
      const int nx = column("nx"), ny = column("ny"), nz = column("nz");
      for (const auto& row : rows) {
        out.vertices.emplace_back(row[x], row[y], row[z]);
        if (nx >= 0 && ny >= 0 && nz >= 0) out.normals.emplace_back(row[nx], row[ny], row[nz]);
      }
    } else if (e.name == "face") {
      if (e.props.empty() || !e.props.front().is_list)
        throw ValidationError("ply: face element must start with a vertex index list");
      for (const auto& row : rows) {
        const auto cnt = static_cast<std::size_t>(row[0]);
        if (cnt < 3) throw ValidationError("ply: face with fewer than 3 vertices");
        for (std::size_t k = 1; k + 1 < cnt; ++k) {
          out.faces.push_back({static_cast<std::uint32_t>(row[1]), static_cast<std::uint32_t>(row[1 + k]),
                               static_cast<std::uint32_t>(row[2 + k])});
        }
      }
    }
  }
  for (const auto& f : out.faces)
    for (auto v : f)
      if (v >= out.vertices.size()) throw ValidationError("ply: face index out of range");
  return out;
}

inline PlyData read_ply_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open PLY file " + path.string());
  return read_ply(in);
}

inline std::string format_real(double v, int digits = 17) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
  return buf;
}

inline void write_ply(std::ostream& out, const TriangleMesh& mesh, int digits = 17) {
  out << "ply\nformat ascii 1.0\n"
      << "element vertex " << mesh.vertices.size() << "\n"
      << "property double x\nproperty double y\nproperty double z\n"
      << "element face " << mesh.faces.size() << "\n"
      << "property list uchar int vertex_indices\nend_header\n";
  for (const auto& v : mesh.vertices)
    out << format_real(v.x(), digits) << ' ' << format_real(v.y(), digits) << ' '
        << format_real(v.z(), digits) << '\n';
  for (const auto& f : mesh.faces) out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
}

/// Writes a cloud as `x y z nx ny nz` vertices.
inline void write_ply(std::ostream& out, const PointCloud& cloud) {
  out << "ply\nformat ascii 1.0\n"
      << "element vertex " << cloud.size() << "\n"
      << "property double x\nproperty double y\nproperty double z\n"
      << "property double nx\nproperty double ny\nproperty double nz\nend_header\n";
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.point(i);
    const auto& n = cloud.normal(i);
    out << format_real(p.x()) << ' ' << format_real(p.y()) << ' ' << format_real(p.z()) << ' '
        << format_real(n.x()) << ' ' << format_real(n.y()) << ' ' << format_real(n.z()) << '\n';
  }
}

}  // namespace dgforge
