#pragma once

#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "dgforge/diffusion.hpp"
#include "dgforge/error.hpp"
#include "dgforge/eval.hpp"
#include "dgforge/kinematics.hpp"
#include "dgforge/nn.hpp"
#include "dgforge/object.hpp"
#include "dgforge/objectives.hpp"
#include "dgforge/sampler.hpp"
#include "dgforge/training.hpp"

namespace dgforge {

using Json = nlohmann::json;

struct DiffusionConfig {
  int steps = 100;
  double beta_start = 1e-3;
  double beta_end = 0.2;

  NoiseSchedule schedule() const { return make_schedule(steps, beta_start, beta_end); }
};

/// Toy benchmark generation (objects and reference grasps).
struct ToyConfig {
  int num_objects = 60;
  int grasps_per_object = 12;
  int attempts_per_grasp = 6;
  int opt_steps = 150;
  double opt_step_size = 0.02;
  double depth_weight = 0.3;  // summed hand-sample depth term of the generator energy
  double shape_weight = 0.2;  // summed object-into-link depth term of the generator energy
  double size_min = 0.025;  // sphere radius / box half-extent / cylinder radius lower bound
  double size_max = 0.04;
  double edge_radius = 0.006;  // rounding of box edges and cylinder rims
  double approach_cone_deg = 45.0;  // initial palm normals within this cone of -z
  double test_fraction = 0.2;
};

struct SampleRunConfig {
  int num_samples = 64;
  std::string split = "test";  // "test", "train" or "all"
  int max_objects = 0;         // 0: no cap
};

struct RunConfig {
  std::uint64_t seed = 0;
  HandSpec hand;
  DiffusionConfig diffusion;
  ConstraintConfig constraints;  // thresholds; weights are the training weights
  TrainConfig train;
  NetConfig net;
  GuidanceConfig guidance;
  EvalConfig eval;
  ObjectSampling objects;
  ToyConfig toy;
  SampleRunConfig sample;

  void validate() const {
    hand.validate();
    constraints.validate();
    train.validate();
    guidance.validate();
    eval.validate();
    require(diffusion.steps >= 1, "diffusion: steps must be >= 1");
    require(net.encoder_points >= 1, "net: encoder_points must be >= 1");
    require(objects.cloud_points >= 1 && objects.loss_points >= 1 && objects.encoder_points >= 1,
            "objects: point counts must be >= 1");
    require(toy.num_objects >= 0 && toy.grasps_per_object >= 0 && toy.attempts_per_grasp >= 1,
            "toy: counts must be non-negative (attempts >= 1)");
    require(toy.size_min > 0 && toy.size_min <= toy.size_max, "toy: need 0 < size_min <= size_max");
    require(toy.edge_radius >= 0.0, "toy: edge_radius must be >= 0");
    require(toy.test_fraction >= 0.0 && toy.test_fraction <= 1.0, "toy: test_fraction must be in [0, 1]");
    require(sample.num_samples >= 0, "sample: num_samples must be >= 0");
    require(sample.split == "test" || sample.split == "train" || sample.split == "all",
            "sample: split must be test, train or all");
    (void)diffusion.schedule();
  }
};

namespace config_detail {

inline void check_keys(const Json& j, const std::string& section, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ValidationError("config: section '" + section + "' must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items())
    if (!ok.count(k)) throw ValidationError("config: unknown key '" + k + "' in section '" + section + "'");
}

template <typename T>
void get(const Json& j, const char* key, T& out, const std::string& section) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ValidationError("config: bad type for '" + section + "." + key + "'");
  }
}

inline void get_opt_bool(const Json& j, const char* key, std::optional<bool>& out, const std::string& section) {
  if (!j.contains(key)) return;
  if (j.at(key).is_null()) {
    out.reset();
  } else if (j.at(key).is_boolean()) {
    out = j.at(key).get<bool>();
  } else {
    throw ValidationError("config: '" + section + "." + key + "' must be a boolean or null");
  }
}

inline Json opt_bool(const std::optional<bool>& v) { return v ? Json(*v) : Json(nullptr); }

}  // namespace config_detail

inline Json to_json(const ConstraintWeights& w) { return {{"spf", w.spf}, {"erf", w.erf}, {"srf", w.srf}}; }

inline ConstraintWeights weights_from_json(const Json& j, const std::string& section) {
  using namespace config_detail;
  check_keys(j, section, {"spf", "erf", "srf"});
  ConstraintWeights w;
  get(j, "spf", w.spf, section);
  get(j, "erf", w.erf, section);
  get(j, "srf", w.srf, section);
  return w;
}

inline Json to_json(const HandSpec& h) {
  return {{"fingers", h.fingers},
          {"joints_per_finger", h.joints_per_finger},
          {"abduction", config_detail::opt_bool(h.abduction)},
          {"thumb", config_detail::opt_bool(h.thumb)},
          {"wrist", h.wrist},
          {"palm_half_width", h.palm_half_width},
          {"palm_half_thickness", h.palm_half_thickness},
          {"palm_length", h.palm_length},
          {"finger_radius", h.finger_radius},
          {"finger_spacing", h.finger_spacing},
          {"finger_lengths", h.finger_lengths},
          {"thumb_lengths", h.thumb_lengths},
          {"sample_rings", h.sample_rings},
          {"sample_segments", h.sample_segments},
          {"palm_grid_x", h.palm_grid_x},
          {"palm_grid_z", h.palm_grid_z},
          {"abduction_limit", h.abduction_limit},
          {"flexion_lower", h.flexion_lower},
          {"flexion_upper", h.flexion_upper},
          {"wrist_limit", h.wrist_limit},
          {"metacarpal_lower", h.metacarpal_lower},
          {"metacarpal_upper", h.metacarpal_upper}};
}

inline HandSpec hand_from_json(const Json& j) {
  using namespace config_detail;
  const std::string s = "hand";
  check_keys(j, s,
             {"fingers", "joints_per_finger", "abduction", "thumb", "wrist", "palm_half_width",
              "palm_half_thickness", "palm_length", "finger_radius", "finger_spacing", "finger_lengths",
              "thumb_lengths", "sample_rings", "sample_segments", "palm_grid_x", "palm_grid_z", "abduction_limit",
              "flexion_lower", "flexion_upper", "wrist_limit", "metacarpal_lower", "metacarpal_upper"});
  HandSpec h;
  get(j, "fingers", h.fingers, s);
  get(j, "joints_per_finger", h.joints_per_finger, s);
  get_opt_bool(j, "abduction", h.abduction, s);
  get_opt_bool(j, "thumb", h.thumb, s);
  get(j, "wrist", h.wrist, s);
  get(j, "palm_half_width", h.palm_half_width, s);
  get(j, "palm_half_thickness", h.palm_half_thickness, s);
  get(j, "palm_length", h.palm_length, s);
  get(j, "finger_radius", h.finger_radius, s);
  get(j, "finger_spacing", h.finger_spacing, s);
  get(j, "finger_lengths", h.finger_lengths, s);
  get(j, "thumb_lengths", h.thumb_lengths, s);
  get(j, "sample_rings", h.sample_rings, s);
  get(j, "sample_segments", h.sample_segments, s);
  get(j, "palm_grid_x", h.palm_grid_x, s);
  get(j, "palm_grid_z", h.palm_grid_z, s);
  get(j, "abduction_limit", h.abduction_limit, s);
  get(j, "flexion_lower", h.flexion_lower, s);
  get(j, "flexion_upper", h.flexion_upper, s);
  get(j, "wrist_limit", h.wrist_limit, s);
  get(j, "metacarpal_lower", h.metacarpal_lower, s);
  get(j, "metacarpal_upper", h.metacarpal_upper, s);
  return h;
}

inline Json to_json(const NetConfig& n) {
  return {{"encoder_widths", n.encoder_widths}, {"hidden", n.hidden}, {"time_dim", n.time_dim},
          {"semantic_dim", n.semantic_dim}, {"encoder_points", n.encoder_points}};
}

inline NetConfig net_from_json(const Json& j) {
  using namespace config_detail;
  const std::string s = "net";
  check_keys(j, s, {"encoder_widths", "hidden", "time_dim", "semantic_dim", "encoder_points"});
  NetConfig n;
  get(j, "encoder_widths", n.encoder_widths, s);
  get(j, "hidden", n.hidden, s);
  get(j, "time_dim", n.time_dim, s);
  get(j, "semantic_dim", n.semantic_dim, s);
  get(j, "encoder_points", n.encoder_points, s);
  require(!n.encoder_widths.empty() && !n.hidden.empty(), "config: net widths must be non-empty");
  return n;
}

inline Json to_json(const RunConfig& c) {
  Json j;
  j["seed"] = c.seed;
  j["hand"] = to_json(c.hand);
  j["diffusion"] = {{"steps", c.diffusion.steps}, {"beta_start", c.diffusion.beta_start},
                    {"beta_end", c.diffusion.beta_end}};
  j["constraints"] = {{"spf_threshold", c.constraints.spf_threshold},
                      {"srf_threshold", c.constraints.srf_threshold},
                      {"eta", c.constraints.eta}};
  const auto& t = c.train;
  j["train"] = {{"weights", to_json(c.constraints.weights)},
                {"learning_rate", t.learning_rate},
                {"batch_size", t.batch_size},
                {"iterations", t.iterations},
                {"clip_norm", t.clip_norm},
                {"ema_decay", t.ema_decay},
                {"optimizer", t.optimizer},
                {"adam_beta1", t.adam_beta1},
                {"adam_beta2", t.adam_beta2},
                {"adam_eps", t.adam_eps},
                {"divergence_limit", t.divergence_limit},
                {"log_physics", t.log_physics},
                {"physics_max_t", t.physics_max_t}};
  j["net"] = to_json(c.net);
  const auto& g = c.guidance;
  j["guidance"] = {{"mode", guidance_mode_name(g.mode)},
                   {"strength", g.strength},
                   {"rate", g.rate},
                   {"weights", to_json(g.weights)},
                   {"clamp_final", g.clamp_final},
                   {"freeze_eps_jacobian", g.freeze_eps_jacobian}};
  const auto& e = c.eval;
  j["eval"] = {{"contact_epsilon", e.contact_epsilon}, {"friction_mu", e.friction_mu},
               {"cone_edges", e.cone_edges},           {"max_contacts_per_link", e.max_contacts_per_link},
               {"wrench", e.wrench},                   {"pen_nn_limit_mm", e.pen_nn_limit_mm},
               {"pen_cyl_limit_mm", e.pen_cyl_limit_mm}};
  j["objects"] = {{"cloud_points", c.objects.cloud_points}, {"loss_points", c.objects.loss_points},
                  {"encoder_points", c.objects.encoder_points}};
  const auto& y = c.toy;
  j["toy"] = {{"num_objects", y.num_objects},
              {"grasps_per_object", y.grasps_per_object},
              {"attempts_per_grasp", y.attempts_per_grasp},
              {"opt_steps", y.opt_steps},
              {"opt_step_size", y.opt_step_size},
              {"depth_weight", y.depth_weight},
              {"shape_weight", y.shape_weight},
              {"size_min", y.size_min},
              {"size_max", y.size_max},
              {"edge_radius", y.edge_radius},
              {"approach_cone_deg", y.approach_cone_deg},
              {"test_fraction", y.test_fraction}};
  j["sample"] = {{"num_samples", c.sample.num_samples}, {"split", c.sample.split},
                 {"max_objects", c.sample.max_objects}};
  return j;
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline RunConfig config_from_json(const Json& j) {
  using namespace config_detail;
  RunConfig c;
  check_keys(j, "<root>",
             {"seed", "hand", "diffusion", "constraints", "train", "net", "guidance", "eval", "objects", "toy",
              "sample"});
  get(j, "seed", c.seed, "<root>");
  if (j.contains("hand")) c.hand = hand_from_json(j["hand"]);
  if (j.contains("diffusion")) {
    const auto& d = j["diffusion"];
    check_keys(d, "diffusion", {"steps", "beta_start", "beta_end"});
    get(d, "steps", c.diffusion.steps, "diffusion");
    get(d, "beta_start", c.diffusion.beta_start, "diffusion");
    get(d, "beta_end", c.diffusion.beta_end, "diffusion");
  }
  if (j.contains("constraints")) {
    const auto& d = j["constraints"];
    check_keys(d, "constraints", {"spf_threshold", "srf_threshold", "eta"});
    get(d, "spf_threshold", c.constraints.spf_threshold, "constraints");
    get(d, "srf_threshold", c.constraints.srf_threshold, "constraints");
    get(d, "eta", c.constraints.eta, "constraints");
  }
  if (j.contains("train")) {
    const auto& d = j["train"];
    const std::string s = "train";
    check_keys(d, s,
               {"weights", "learning_rate", "batch_size", "iterations", "clip_norm", "ema_decay", "optimizer",
                "adam_beta1", "adam_beta2", "adam_eps", "divergence_limit", "log_physics", "physics_max_t"});
    if (d.contains("weights")) c.constraints.weights = weights_from_json(d["weights"], "train.weights");
    auto& t = c.train;
    get(d, "learning_rate", t.learning_rate, s);
    get(d, "batch_size", t.batch_size, s);
    get(d, "iterations", t.iterations, s);
    get(d, "clip_norm", t.clip_norm, s);
    get(d, "ema_decay", t.ema_decay, s);
    get(d, "optimizer", t.optimizer, s);
    get(d, "adam_beta1", t.adam_beta1, s);
    get(d, "adam_beta2", t.adam_beta2, s);
    get(d, "adam_eps", t.adam_eps, s);
    get(d, "divergence_limit", t.divergence_limit, s);
    get(d, "log_physics", t.log_physics, s);
    get(d, "physics_max_t", t.physics_max_t, s);
  }
  if (j.contains("net")) c.net = net_from_json(j["net"]);
  if (j.contains("guidance")) {
    const auto& d = j["guidance"];
    const std::string s = "guidance";
    check_keys(d, s, {"mode", "strength", "rate", "weights", "clamp_final", "freeze_eps_jacobian"});
    auto& g = c.guidance;
    if (d.contains("mode")) {
      std::string m;
      get(d, "mode", m, s);
      g.mode = parse_guidance_mode(m);
    }
    get(d, "strength", g.strength, s);
    get(d, "rate", g.rate, s);
    if (d.contains("weights")) g.weights = weights_from_json(d["weights"], "guidance.weights");
    get(d, "clamp_final", g.clamp_final, s);
    get(d, "freeze_eps_jacobian", g.freeze_eps_jacobian, s);
  }
  if (j.contains("eval")) {
    const auto& d = j["eval"];
    const std::string s = "eval";
    check_keys(d, s,
               {"contact_epsilon", "friction_mu", "cone_edges", "max_contacts_per_link", "wrench",
                "pen_nn_limit_mm", "pen_cyl_limit_mm"});
    auto& e = c.eval;
    get(d, "contact_epsilon", e.contact_epsilon, s);
    get(d, "friction_mu", e.friction_mu, s);
    get(d, "cone_edges", e.cone_edges, s);
    get(d, "max_contacts_per_link", e.max_contacts_per_link, s);
    get(d, "wrench", e.wrench, s);
    get(d, "pen_nn_limit_mm", e.pen_nn_limit_mm, s);
    get(d, "pen_cyl_limit_mm", e.pen_cyl_limit_mm, s);
  }
  if (j.contains("objects")) {
    const auto& d = j["objects"];
    check_keys(d, "objects", {"cloud_points", "loss_points", "encoder_points"});
    get(d, "cloud_points", c.objects.cloud_points, "objects");
    get(d, "loss_points", c.objects.loss_points, "objects");
    get(d, "encoder_points", c.objects.encoder_points, "objects");
  }
  if (j.contains("toy")) {
    const auto& d = j["toy"];
    const std::string s = "toy";
    check_keys(d, s,
               {"num_objects", "grasps_per_object", "attempts_per_grasp", "opt_steps", "opt_step_size", "depth_weight", "shape_weight",
                "size_min",
                "size_max", "edge_radius", "approach_cone_deg", "test_fraction"});
    auto& y = c.toy;
    get(d, "num_objects", y.num_objects, s);
    get(d, "grasps_per_object", y.grasps_per_object, s);
    get(d, "attempts_per_grasp", y.attempts_per_grasp, s);
    get(d, "opt_steps", y.opt_steps, s);
    get(d, "opt_step_size", y.opt_step_size, s);
    get(d, "depth_weight", y.depth_weight, s);
    get(d, "shape_weight", y.shape_weight, s);
    get(d, "size_min", y.size_min, s);
    get(d, "size_max", y.size_max, s);
    get(d, "edge_radius", y.edge_radius, s);
    get(d, "approach_cone_deg", y.approach_cone_deg, s);
    get(d, "test_fraction", y.test_fraction, s);
  }
  if (j.contains("sample")) {
    const auto& d = j["sample"];
    check_keys(d, "sample", {"num_samples", "split", "max_objects"});
    get(d, "num_samples", c.sample.num_samples, "sample");
    get(d, "split", c.sample.split, "sample");
    get(d, "max_objects", c.sample.max_objects, "sample");
  }
  c.validate();
  return c;
}

inline Json parse_json_text(const std::string& text, const std::string& what) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(what + ": invalid JSON (" + e.what() + ")");
  }
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline RunConfig load_config(const std::string& path) {
  return config_from_json(parse_json_text(read_text_file(path), path));
}

inline std::string dump_json(const Json& j) { return j.dump(2) + "\n"; }

}  // namespace dgforge
