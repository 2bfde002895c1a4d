#pragma once

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "dgforge/config.hpp"
#include "dgforge/eval.hpp"
#include "dgforge/mesh.hpp"
#include "dgforge/object.hpp"
#include "dgforge/objectives.hpp"
#include "dgforge/parallel.hpp"

namespace dgforge {

namespace fs = std::filesystem;

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
  return buf;
}

inline std::uint64_t fnv1a(const std::string& s) { return fnv1a(s.data(), s.size()); }

/// Writes via a sibling temporary and renames, so readers never see a
/// partially written file.
inline void write_file_atomic(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write '" + tmp.string() + "'");
    out << content;
    if (!out) throw ValidationError("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// Grasp records

struct GraspRecord {
  std::string object_id;
  Vec pose;
  std::string split = "train";
  std::string provenance;
};

inline Json to_json(const GraspRecord& r) {
  return {{"object_id", r.object_id},
          {"pose", std::vector<double>(r.pose.data(), r.pose.data() + r.pose.size())},
          {"split", r.split},
          {"provenance", r.provenance}};
}

inline std::vector<double> pose_array(const Json& j, const std::string& where) {
  if (!j.is_array()) throw ValidationError(where + ": 'pose' must be an array");
  std::vector<double> v;
  for (const auto& x : j) {
    if (!x.is_number()) throw ValidationError(where + ": 'pose' entries must be numbers");
    v.push_back(x.get<double>());
  }
  return v;
}

inline GraspRecord record_from_json(const Json& j, const std::string& where, int pose_dim = -1) {
  if (!j.is_object() || !j.contains("object_id") || !j.contains("pose"))
    throw ValidationError(where + ": record needs 'object_id' and 'pose'");
  GraspRecord r;
  r.object_id = j["object_id"].get<std::string>();
  const auto v = pose_array(j["pose"], where);
  r.pose = Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
  if (pose_dim >= 0 && r.pose.size() != pose_dim)
    throw ValidationError(where + ": pose has " + std::to_string(r.pose.size()) + " entries, hand model expects " +
                          std::to_string(pose_dim));
  if (j.contains("split")) r.split = j["split"].get<std::string>();
  if (r.split != "train" && r.split != "test") throw ValidationError(where + ": split must be train or test");
  if (j.contains("provenance")) r.provenance = j["provenance"].get<std::string>();
  return r;
}

/// One compact JSON document per line.
inline std::vector<Json> read_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  std::vector<Json> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    out.push_back(parse_json_text(line, path + ":" + std::to_string(lineno)));
  }
  return out;
}

inline std::string jsonl_text(const std::vector<Json>& rows) {
  std::string s;
  for (const auto& r : rows) s += r.dump() + "\n";
  return s;
}

// ---------------------------------------------------------------------------
// Objects

enum class ToyShape { sphere, box, cylinder };

inline const char* shape_name(ToyShape s) {
  switch (s) {
    case ToyShape::box: return "box";
    case ToyShape::cylinder: return "cylinder";
    case ToyShape::sphere: break;
  }
  return "sphere";
}

struct ObjectSpec {
  std::string id;
  ToyShape shape = ToyShape::sphere;
  Vec3 size = Vec3::Zero();  // sphere (r,0,0); box half extents; cylinder (r, half length, 0)
  double rounding = 0.0;     // edge radius of boxes and cylinder rims
  std::string split = "train";
};

inline TriangleMesh object_mesh(const ObjectSpec& o) {
  switch (o.shape) {
    case ToyShape::box: return o.rounding > 0.0 ? make_rounded_box_mesh(o.size, o.rounding) : make_box_mesh(o.size);
    case ToyShape::cylinder:
      return o.rounding > 0.0 ? make_rounded_cylinder_mesh(o.size.x(), o.size.y(), o.rounding)
                              : make_cylinder_mesh(o.size.x(), 2.0 * o.size.y(), 32, true);
    case ToyShape::sphere: break;
  }
  return make_sphere_mesh(o.size.x(), 3);
}

/// Farthest extent of the shape along unit direction a.
inline double support_distance(const ObjectSpec& o, const Vec3& a) {
  switch (o.shape) {
    case ToyShape::box: return a.cwiseAbs().dot(o.size - Vec3::Constant(o.rounding)) + o.rounding;
    case ToyShape::cylinder:
      return std::abs(a.z()) * (o.size.y() - o.rounding) +
             (o.size.x() - o.rounding) * std::sqrt(std::max(0.0, 1.0 - a.z() * a.z())) + o.rounding;
    case ToyShape::sphere: break;
  }
  return o.size.x();
}

/// Deterministic split by id hash.
inline std::string split_for(const std::string& id, double test_fraction) {
  const double u = static_cast<double>(mix64(object_seed(id)) >> 11) * 0x1.0p-53;
  return u < test_fraction ? "test" : "train";
}

inline ObjectSpec make_toy_object(int index, const ToyConfig& cfg, std::uint64_t seed) {
  CounterRng rng(seed, 0x0b1ec7, static_cast<std::uint64_t>(index));
  ObjectSpec o;
  o.shape = static_cast<ToyShape>(index % 3);
  char buf[48];
  std::snprintf(buf, sizeof buf, "%s_%04d", shape_name(o.shape), index);
  o.id = buf;
  const double lo = cfg.size_min, hi = cfg.size_max;
  switch (o.shape) {
    case ToyShape::sphere: o.size = Vec3(rng.uniform(lo, hi), 0, 0); break;
    case ToyShape::box: o.size = Vec3(rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi)); break;
    case ToyShape::cylinder: o.size = Vec3(rng.uniform(lo, hi), rng.uniform(1.2 * lo, 1.5 * hi), 0); break;
  }
  if (o.shape != ToyShape::sphere) o.rounding = std::min(cfg.edge_radius, o.size.head<2>().minCoeff());
  if (o.shape == ToyShape::box) o.rounding = std::min(o.rounding, o.size.z());
  o.split = split_for(o.id, cfg.test_fraction);
  return o;
}

// ---------------------------------------------------------------------------
// Reference grasps by direct energy minimization

/// Palm-local point that should rest on the object, roughly under the
/// middle of the palmar face.
inline Vec3 palm_contact_point(const HandSpec& h, double along) {
  return Vec3(0.0, -h.palm_half_thickness, along * h.palm_length);
}

/// Heuristic initial pose: palmar face above the object along an approach
/// direction inside a cone around +z, fingers half closed.
inline HandPose initial_grasp(const ObjectSpec& o, const HandSpec& spec, const KinematicHandModel& model,
                              const ToyConfig& cfg, CounterRng& rng) {
  const double cmax = std::cos(cfg.approach_cone_deg * std::numbers::pi / 180.0);
  const double cz = rng.uniform(cmax, 1.0);
  const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double sz = std::sqrt(std::max(0.0, 1.0 - cz * cz));
  const Vec3 a(sz * std::cos(phi), sz * std::sin(phi), cz);
  // finger direction: random unit vector orthogonal to a
  const auto [t1, t2] = tangent_basis(a);
  const double psi = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const Vec3 z = std::cos(psi) * t1 + std::sin(psi) * t2;
  Mat3 R;
  R.col(1) = a;  // palmar side (-y) faces the object
  R.col(2) = z;
  R.col(0) = a.cross(z);
  const double gap = rng.uniform(0.0, 0.008);
  const Vec3 p = palm_contact_point(spec, rng.uniform(0.45, 0.7));
  const Vec3 t = a * (support_distance(o, a) + gap) - R * p;

  Vec theta(model.num_joints());
  for (int j = 0; j < model.num_joints(); ++j) {
    const auto& name = model.links()[model.joint_link(j)].name;
    const double lo = model.lower_limits()[j], hi = model.upper_limits()[j];
    double v = 0.0;
    if (name.find("phalanx") != std::string::npos) {
      v = rng.uniform(0.2, 0.8);
    } else if (name.find("abduction") != std::string::npos) {
      v = rng.uniform(-0.1, 0.1);
    } else if (name.find("metacarpal") != std::string::npos) {
      v = rng.uniform(0.1, 0.6);
    }
    theta[j] = std::clamp(v, lo, hi);
  }
  return HandPose::from_parts(theta, R, t);
}

/// Adds w * sum of depths of object samples inside the hand link shapes,
/// with the gradient of each depth taken as a point attached to the link.
inline void add_shape_depth(const FkResult& fk, const KinematicHandModel& model, const PointCloud& cloud, double w,
                            ConstraintEval& e) {
  const double h = 1e-7;
  for (int l = 0; l < model.num_links(); ++l) {
    const auto& shape = model.links()[l].shape;
    Vec3 c;
    double radius = 0.0;
    if (shape.kind == ShapeKind::cylinder) {
      c = 0.5 * (shape.cylinder.axis_start + shape.cylinder.axis_end);
      radius = 0.5 * shape.cylinder.length() + shape.cylinder.radius;
    } else if (shape.kind == ShapeKind::box) {
      c = shape.box.center;
      radius = shape.box.half_extents.norm();
    } else {
      continue;
    }
    const Rigid inv = fk.link_world[l].inverse();
    for (const auto& x : cloud.points()) {
      const Vec3 y = inv.apply(x);
      if ((y - c).squaredNorm() > radius * radius) continue;
      const double sd = shape.signed_distance(y);
      if (sd >= 0.0) continue;
      Vec3 g;
      for (int k = 0; k < 3; ++k) {
        const Vec3 dk = h * Vec3::Unit(k);
        g[k] = (shape.signed_distance(y + dk) - shape.signed_distance(y - dk)) / (2.0 * h);
      }
      e.value += w * -sd;
      // depth = -sd(T^-1 x); moving the link by v shifts y by -R^T v
      e.grad_pose.noalias() += w * fk.attached_jacobian(model.chain(l), x).transpose() * (fk.link_world[l].R * g);
    }
  }
}

/// Exact signed distance of a toy shape (positive outside).
inline double object_sdf(const ObjectSpec& o, const Vec3& p) {
  switch (o.shape) {
    case ToyShape::box:
      return signed_distance_to_box(p, BoxGeom{Vec3::Zero(), o.size - Vec3::Constant(o.rounding)}) - o.rounding;
    case ToyShape::cylinder: {
      const Eigen::Vector2d q(std::hypot(p.x(), p.y()) - (o.size.x() - o.rounding),
                              std::abs(p.z()) - (o.size.y() - o.rounding));
      return std::min(q.maxCoeff(), 0.0) + q.cwiseMax(0.0).norm() - o.rounding;
    }
    case ToyShape::sphere: break;
  }
  return p.norm() - o.size.x();
}

/// Energy minimized by the generator: the pulling and self-penetration
/// terms plus summed penetration depths in both directions, measured with
/// the exact shape. The max-depth term is left out: its clearance branch
/// pushes the hand away once nothing is in pulling range, and the
/// nearest-sample sign misreads points beside sharp edges.
inline ConstraintEval generator_energy(const HandPose& pose, const KinematicHandModel& model, const KdTree& index,
                                       const ObjectSpec& obj, const ConstraintConfig& cc, double depth_weight,
                                       double shape_weight) {
  const FkResult fk = forward_kinematics(model, pose, true);
  const auto nn = nearest_neighbors(fk, index);
  const auto& w = cc.weights;
  const ConstraintEval spf = surface_pulling_force(fk, model, index, cc, &nn);
  const ConstraintEval srf = self_penetration_force(fk, model, cc);
  ConstraintEval e;
  e.value = w.spf * spf.value + w.srf * srf.value;
  e.grad_pose = w.spf * spf.grad_pose + w.srf * srf.grad_pose;
  if (depth_weight > 0.0) {
    const double h = 1e-7;
    std::vector<Vec3> grads(fk.world_points.size(), Vec3::Zero());
    for (std::size_t i = 0; i < grads.size(); ++i) {
      const Vec3& p = fk.world_points[i];
      const double sd = object_sdf(obj, p);
      if (sd >= 0.0) continue;
      Vec3 g;
      for (int k = 0; k < 3; ++k)
        g[k] = (object_sdf(obj, p + h * Vec3::Unit(k)) - object_sdf(obj, p - h * Vec3::Unit(k))) / (2.0 * h);
      e.value += depth_weight * -sd;
      grads[i] = -depth_weight * g;
    }
    e.grad_pose += fk.pullback(grads);
  }
  if (shape_weight > 0.0) add_shape_depth(fk, model, index.cloud(), shape_weight, e);
  return e;
}

/// Adam on the generator energy with per-group step sizes (radians for
/// joints and rotation, scaled for meters), keeping joints inside their
/// limits and the rotation orthonormal.
inline HandPose minimize_energy(HandPose pose, const KinematicHandModel& model, const KdTree& index,
                                const ObjectSpec& obj, const ConstraintConfig& cc, int steps, double step_size, double depth_weight,
                                double shape_weight) {
  const int n = model.pose_dim(), K = model.num_joints();
  Vec scale = Vec::Constant(n, step_size);
  scale.segment(K, 6).setConstant(0.5 * step_size);
  scale.tail(3).setConstant(0.1 * step_size);
  Vec m = Vec::Zero(n), v = Vec::Zero(n);
  const double b1 = 0.9, b2 = 0.999;
  for (int k = 1; k <= steps; ++k) {
    const ConstraintEval e = generator_energy(pose, model, index, obj, cc, depth_weight, shape_weight);
    m = b1 * m + (1 - b1) * e.grad_pose;
    v = b2 * v + (1 - b2) * e.grad_pose.cwiseAbs2();
    const Vec mh = m / (1 - std::pow(b1, k));
    const Vec vh = v / (1 - std::pow(b2, k));
    pose.values.array() -= scale.array() * mh.array() / (vh.array().sqrt() + 1e-12);
    const Mat3 R = orthonormalize_rot6d(pose.rot6d());
    pose.rot6d().head<3>() = R.col(0);
    pose.rot6d().tail<3>() = R.col(1);
    pose = model.clamp_to_limits(pose);
  }
  return pose;
}

struct ToyObjectResult {
  ObjectSpec spec;
  TriangleMesh mesh;
  std::vector<GraspRecord> grasps;
  int attempts = 0;
};

/// Objects of the held-out split get no reference grasps; they are only
/// used for sampling and evaluation.
inline ToyObjectResult generate_toy_object(int index, const RunConfig& cfg, const KinematicHandModel& model,
                                           std::uint64_t seed) {
  ToyObjectResult r;
  r.spec = make_toy_object(index, cfg.toy, seed);
  r.mesh = object_mesh(r.spec);
  if (r.spec.split != "train" || cfg.toy.grasps_per_object == 0) return r;
  const auto asset = ObjectAsset::make(r.spec.id, r.mesh, cfg.objects);
  const int budget = cfg.toy.grasps_per_object * cfg.toy.attempts_per_grasp;
  for (int a = 0; a < budget && static_cast<int>(r.grasps.size()) < cfg.toy.grasps_per_object; ++a) {
    CounterRng rng(seed, 0x9a5b + static_cast<std::uint64_t>(index), static_cast<std::uint64_t>(a));
    HandPose p = initial_grasp(r.spec, cfg.hand, model, cfg.toy, rng);
    p = minimize_energy(p, model, *asset->index, r.spec, cfg.constraints, cfg.toy.opt_steps, cfg.toy.opt_step_size,
                       cfg.toy.depth_weight, cfg.toy.shape_weight);
    ++r.attempts;
    if (!p.values.allFinite()) continue;
    if (!filter_grasp(p, model, *asset->index, cfg.eval).first) continue;
    GraspRecord g;
    g.object_id = r.spec.id;
    g.pose = p.values;
    g.split = r.spec.split;
    g.provenance = "toy-opt:seed=" + std::to_string(seed) + ":attempt=" + std::to_string(a);
    r.grasps.push_back(std::move(g));
  }
  return r;
}

// ---------------------------------------------------------------------------
// Dataset directory: manifest.json, grasps.jsonl, objects/<id>.ply

struct Dataset {
  std::vector<ObjectSpec> objects;
  std::map<std::string, std::string> mesh_files;  // id -> path relative to root
  std::vector<GraspRecord> records;
  fs::path root;
};

inline Json spec_to_json(const ObjectSpec& o, const std::string& mesh_file, std::uint64_t mesh_hash) {
  return {{"id", o.id},
          {"shape", shape_name(o.shape)},
          {"size", {o.size.x(), o.size.y(), o.size.z()}},
          {"rounding", o.rounding},
          {"split", o.split},
          {"mesh", mesh_file},
          {"mesh_fnv", hex64(mesh_hash)}};
}

inline std::string mesh_text(const TriangleMesh& m) {
  std::ostringstream ss;
  write_ply(ss, m);
  return ss.str();
}

/// Writes the dataset and returns the manifest.
inline Json write_dataset(const fs::path& dir, const std::vector<ToyObjectResult>& objects, const Json& echo) {
  fs::create_directories(dir / "objects");
  Json jobjs = Json::array();
  std::vector<Json> rows;
  Json hashes = Json::array();
  for (const auto& o : objects) {
    const std::string rel = "objects/" + o.spec.id + ".ply";
    const std::string text = mesh_text(o.mesh);
    write_file_atomic(dir / rel, text);
    jobjs.push_back(spec_to_json(o.spec, rel, fnv1a(text)));
    for (const auto& g : o.grasps) {
      rows.push_back(to_json(g));
      hashes.push_back(hex64(fnv1a(rows.back().dump())));
    }
  }
  const std::string records = jsonl_text(rows);
  write_file_atomic(dir / "grasps.jsonl", records);
  Json manifest = {{"format", "dgforge-dataset"},
                   {"version", 1},
                   {"config", echo},
                   {"objects", jobjs},
                   {"records", {{"file", "grasps.jsonl"}, {"count", rows.size()}, {"fnv", hex64(fnv1a(records))},
                                {"line_fnv", hashes}}}};
  write_file_atomic(dir / "manifest.json", dump_json(manifest));
  return manifest;
}

inline ToyShape parse_shape(const std::string& s) {
  if (s == "sphere") return ToyShape::sphere;
  if (s == "box") return ToyShape::box;
  if (s == "cylinder") return ToyShape::cylinder;
  throw ValidationError("manifest: unknown shape '" + s + "'");
}

/// Reads and validates a dataset directory. Mesh and record hashes must
/// match the manifest; a corrupt record is reported by line number.
inline Dataset read_dataset(const fs::path& dir, int pose_dim = -1) {
  const fs::path mpath = dir / "manifest.json";
  if (!fs::exists(mpath)) throw ValidationError("dataset: missing manifest '" + mpath.string() + "'");
  const Json m = parse_json_text(read_text_file(mpath.string()), mpath.string());
  if (m.value("format", "") != "dgforge-dataset") throw ValidationError("dataset: not a dgforge dataset manifest");
  Dataset d;
  d.root = dir;
  try {
    for (const auto& jo : m.at("objects")) {
      ObjectSpec o;
      o.id = jo.at("id").get<std::string>();
      o.shape = parse_shape(jo.at("shape").get<std::string>());
      const auto s = jo.at("size").get<std::vector<double>>();
      require(s.size() == 3, "dataset: object size must have 3 entries");
      o.size = Vec3(s[0], s[1], s[2]);
      o.rounding = jo.value("rounding", 0.0);
      o.split = jo.at("split").get<std::string>();
      const std::string rel = jo.at("mesh").get<std::string>();
      const std::string text = read_text_file((dir / rel).string());
      if (hex64(fnv1a(text)) != jo.at("mesh_fnv").get<std::string>())
        throw ValidationError("dataset: mesh hash mismatch for '" + rel + "'");
      d.mesh_files[o.id] = rel;
      d.objects.push_back(o);
    }
    const auto& jr = m.at("records");
    const std::string rpath = (dir / jr.at("file").get<std::string>()).string();
    const std::string text = read_text_file(rpath);
    const auto& line_fnv = jr.at("line_fnv");
    std::istringstream in(text);
    std::string line;
    std::size_t k = 0;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const std::string where = rpath + ":" + std::to_string(k + 1);
      if (k >= line_fnv.size()) throw ValidationError(where + ": record not listed in manifest");
      if (hex64(fnv1a(line)) != line_fnv[k].get<std::string>())
        throw ValidationError(where + ": record hash mismatch (corrupt record)");
      d.records.push_back(record_from_json(parse_json_text(line, where), where, pose_dim));
      ++k;
    }
    if (k != jr.at("count").get<std::size_t>() || hex64(fnv1a(text)) != jr.at("fnv").get<std::string>())
      throw ValidationError("dataset: record count or file hash does not match manifest");
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("dataset: malformed manifest (") + e.what() + ")");
  }
  return d;
}

/// Loads object meshes from a dataset, keyed by id.
inline std::map<std::string, std::unique_ptr<ObjectAsset>> load_objects(const Dataset& d, const ObjectSampling& s,
                                                                        const std::vector<std::string>& ids) {
  std::map<std::string, std::unique_ptr<ObjectAsset>> out;
  for (const auto& id : ids) {
    auto it = d.mesh_files.find(id);
    if (it == d.mesh_files.end() || out.count(id)) continue;
    out[id] = ObjectAsset::make(id, read_ply_file(d.root / it->second).mesh(), s);
  }
  return out;
}

}  // namespace dgforge
