#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "dgforge/checkpoint.hpp"
#include "dgforge/config.hpp"
#include "dgforge/dataset.hpp"
#include "dgforge/eval.hpp"
#include "dgforge/sampler.hpp"
#include "dgforge/training.hpp"

namespace dgforge {

using ObjectMap = std::map<std::string, std::unique_ptr<ObjectAsset>>;

/// Builds the training set from the train-split records of a dataset.
inline TrainSet make_train_set(const Dataset& d, const ObjectMap& objects, const KinematicHandModel& model) {
  TrainSet s;
  s.model = &model;
  std::map<std::string, std::size_t> slot;
  std::vector<Vec> poses;
  for (const auto& r : d.records) {
    if (r.split != "train") continue;
    auto it = objects.find(r.object_id);
    if (it == objects.end()) throw ValidationError("train: record references unknown object '" + r.object_id + "'");
    if (!slot.count(r.object_id)) {
      slot[r.object_id] = s.objects.size();
      s.objects.push_back(it->second.get());
    }
    s.examples.push_back({r.pose, slot[r.object_id]});
    poses.push_back(r.pose);
  }
  require(!s.examples.empty(), "train: dataset has no training records");
  s.normalizer = PoseNormalizer::fit(poses);
  return s;
}

inline std::vector<std::string> train_object_ids(const Dataset& d) {
  std::vector<std::string> ids;
  for (const auto& r : d.records)
    if (r.split == "train") ids.push_back(r.object_id);
  return ids;
}

/// Trains (or resumes) and returns the resulting checkpoint.
inline Checkpoint train_checkpoint(const RunConfig& cfg, const TrainSet& data, const Checkpoint* resume = nullptr,
                                   const std::function<void(const LossRecord&)>& on_iteration = {}) {
  Checkpoint c;
  c.config = cfg;
  const int n = data.model->pose_dim();
  if (resume) {
    if (resume->state.net.pose_dim != n)
      throw ValidationError("train: checkpoint pose dimension " + std::to_string(resume->state.net.pose_dim) +
                            " does not match hand model " + std::to_string(n));
    c.normalizer = resume->normalizer;
    c.state = resume->state;
  } else {
    c.normalizer = data.normalizer;
    c.state = init_train_state(cfg.net, n, cfg.seed);
  }
  TrainSet ds = data;
  ds.normalizer = c.normalizer;
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  train(c.state, ds, cfg.diffusion.schedule(), cfg.constraints, tc, on_iteration);
  return c;
}

struct SampleRecord {
  std::string object_id;
  Vec pose;
  std::uint64_t seed = 0;
  std::size_t chain = 0;
  std::string mode;
  ConstraintBreakdown terms;
};

inline Json to_json(const SampleRecord& r) {
  return {{"object_id", r.object_id},
          {"pose", std::vector<double>(r.pose.data(), r.pose.data() + r.pose.size())},
          {"seed", r.seed},
          {"chain", r.chain},
          {"guidance", r.mode},
          {"constraints",
           {{"spf", r.terms.spf.value}, {"erf", r.terms.erf.value}, {"srf", r.terms.srf.value},
            {"total", r.terms.total.value}}}};
}

inline ConstraintConfig guidance_constraints(const RunConfig& cfg) {
  ConstraintConfig cc = cfg.constraints;
  cc.weights = cfg.guidance.weights;
  return cc;
}

/// Samples `count` poses for one object with the EMA weights.
inline std::vector<SampleRecord> sample_object(const Checkpoint& ck, const RunConfig& cfg,
                                               const KinematicHandModel& model, const ObjectAsset& obj,
                                               std::size_t count, std::uint64_t seed) {
  const GraspNet& net = ck.state.ema;
  if (net.pose_dim != model.pose_dim())
    throw ValidationError("sample: checkpoint pose dimension " + std::to_string(net.pose_dim) +
                          " does not match the configured hand (" + std::to_string(model.pose_dim()) + ")");
  const NoiseSchedule schedule = cfg.diffusion.schedule();
  const ConstraintConfig cc = guidance_constraints(cfg);
  SamplerContext ctx;
  ctx.net = &net;
  ctx.schedule = &schedule;
  ctx.normalizer = ck.normalizer;
  ctx.feature = encoder_forward(net, obj.encoder_points);
  ctx.objective = physics_objective(model, *obj.index, cc);
  ctx.model = &model;
  const std::uint64_t chain_seed = hash_combine(seed, object_seed(obj.id));
  const auto poses = sample(ctx, count, cfg.guidance, chain_seed);
  std::vector<SampleRecord> out(poses.size());
  parallel_for(poses.size(), [&](std::size_t i) {
    auto& r = out[i];
    r.object_id = obj.id;
    r.pose = poses[i].values;
    r.seed = seed;
    r.chain = i;
    r.mode = guidance_mode_name(cfg.guidance.mode);
    try {
      r.terms = evaluate_constraints(poses[i], model, *obj.index, cc, false);
    } catch (const ValidationError&) {
      const double nan = std::numeric_limits<double>::quiet_NaN();
      r.terms.spf.value = r.terms.erf.value = r.terms.srf.value = r.terms.total.value = nan;
    }
  });
  return out;
}

struct EvalRow {
  std::string object_id;
  EvalReport report;
};

struct EvalSummary {
  std::size_t count = 0;
  std::size_t skipped = 0;  // unknown object ids
  double suc6_rate = 0.0, suc1_rate = 0.0;
  double mean_pen_mm = 0.0, max_pen_mm = 0.0, mean_pen_cyl_mm = 0.0;
  double accept_rate = 0.0;
  double div = 0.0;
};

/// Evaluates poses; unknown objects are skipped and counted. Invalid poses
/// (degenerate rotation) count as failures with zero penetration.
inline std::vector<EvalRow> evaluate_poses(const std::vector<std::pair<std::string, Vec>>& poses,
                                           const ObjectMap& objects, const KinematicHandModel& model,
                                           const EvalConfig& cfg, std::size_t* skipped = nullptr) {
  std::vector<std::size_t> keep;
  std::size_t miss = 0;
  for (std::size_t i = 0; i < poses.size(); ++i) {
    if (objects.count(poses[i].first)) {
      keep.push_back(i);
    } else {
      ++miss;
    }
  }
  if (skipped) *skipped = miss;
  std::vector<EvalRow> rows(keep.size());
  parallel_for(keep.size(), [&](std::size_t k) {
    const auto& [id, v] = poses[keep[k]];
    rows[k].object_id = id;
    if (v.size() != model.pose_dim())
      throw ValidationError("eval: pose for '" + id + "' has " + std::to_string(v.size()) + " entries, expected " +
                            std::to_string(model.pose_dim()));
    try {
      rows[k].report = evaluate_grasp(HandPose(v), model, *objects.at(id)->index, cfg);
    } catch (const ValidationError&) {
      rows[k].report = EvalReport{};
      apply_filter_verdict(rows[k].report, cfg);
    }
  });
  return rows;
}

/// Diversity is computed per object over its successful poses and averaged
/// over objects with at least two successes.
inline EvalSummary summarize(const std::vector<EvalRow>& rows, const std::vector<Vec>& poses, std::size_t skipped) {
  EvalSummary s;
  s.count = rows.size();
  s.skipped = skipped;
  if (rows.empty()) return s;
  std::map<std::string, std::pair<std::vector<HandPose>, std::vector<bool>>> groups;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i].report;
    s.suc6_rate += r.suc6;
    s.suc1_rate += r.suc1;
    s.mean_pen_mm += r.pen_mm;
    s.max_pen_mm = std::max(s.max_pen_mm, r.pen_mm);
    s.mean_pen_cyl_mm += r.pen_cyl_mm;
    s.accept_rate += r.accepted;
    auto& g = groups[rows[i].object_id];
    g.first.emplace_back(poses[i]);
    g.second.push_back(r.suc6);
  }
  const double n = static_cast<double>(rows.size());
  s.suc6_rate /= n;
  s.suc1_rate /= n;
  s.mean_pen_mm /= n;
  s.mean_pen_cyl_mm /= n;
  s.accept_rate /= n;
  int used = 0;
  for (const auto& [id, g] : groups) {
    if (std::count(g.second.begin(), g.second.end(), true) < 2) continue;
    s.div += diversity(g.first, g.second);
    ++used;
  }
  if (used) s.div /= used;
  return s;
}

inline Json to_json(const EvalSummary& s) {
  return {{"count", s.count},         {"skipped_unknown_object", s.skipped},
          {"suc6_rate", s.suc6_rate}, {"suc1_rate", s.suc1_rate},
          {"mean_pen_mm", s.mean_pen_mm}, {"max_pen_mm", s.max_pen_mm},
          {"mean_pen_cyl_mm", s.mean_pen_cyl_mm}, {"accept_rate", s.accept_rate},
          {"div", s.div}};
}

inline std::string reasons_text(const EvalReport& r) {
  std::string s;
  for (auto reason : r.reasons) s += (s.empty() ? "" : "|") + std::string(reason_code(reason));
  return s;
}

inline std::string eval_csv(const std::vector<EvalRow>& rows) {
  std::string s = "index,object_id,pen_mm,pen_cyl_mm,suc6,suc1,num_contacts,accepted,reasons\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i].report;
    s += std::to_string(i) + "," + rows[i].object_id + "," + format_real(r.pen_mm) + "," +
         format_real(r.pen_cyl_mm) + "," + (r.suc6 ? "1" : "0") + "," + (r.suc1 ? "1" : "0") + "," +
         std::to_string(r.num_contacts) + "," + (r.accepted ? "1" : "0") + "," + reasons_text(r) + "\n";
  }
  return s;
}

/// Hand link shapes (cylinders and palm box) posed in the object frame.
inline TriangleMesh hand_mesh(const HandPose& pose, const KinematicHandModel& model, int segments = 16) {
  const FkResult fk = forward_kinematics(model, pose);
  TriangleMesh out;
  for (int l = 0; l < model.num_links(); ++l) {
    const auto& shape = model.links()[l].shape;
    TriangleMesh m;
    if (shape.kind == ShapeKind::cylinder) {
      m = make_cylinder_mesh(shape.cylinder, segments);
    } else if (shape.kind == ShapeKind::box) {
      m = make_box_mesh(shape.box.half_extents);
      m.transform(Rigid{Mat3::Identity(), shape.box.center});
    } else {
      continue;
    }
    m.transform(fk.link_world[l]);
    out.append(m);
  }
  return out;
}

inline void write_obj(std::ostream& out, const TriangleMesh& m) {
  out << "# dgforge export\n";
  for (const auto& v : m.vertices)
    out << "v " << format_real(v.x()) << ' ' << format_real(v.y()) << ' ' << format_real(v.z()) << '\n';
  for (const auto& f : m.faces) out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
}

}  // namespace dgforge
