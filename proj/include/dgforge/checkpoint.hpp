#pragma once

#include <string>
#include <vector>

#include "dgforge/config.hpp"
#include "dgforge/diffusion.hpp"
#include "dgforge/nn.hpp"
#include "dgforge/training.hpp"

namespace dgforge {

struct Checkpoint {
  RunConfig config;
  PoseNormalizer normalizer;
  TrainState state;
};

namespace ckpt_detail {

inline Json vec_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Vec json_vec(const Json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline Json params_json(const GraspNet& net) {
  Json arr = Json::array();
  net.for_each_param([&](const std::string& name, const auto& m) {
    arr.push_back({{"name", name},
                   {"rows", m.rows()},
                   {"cols", m.cols()},
                   {"data", std::vector<double>(m.data(), m.data() + m.size())}});
  });
  return arr;
}

inline void assign_params(GraspNet& net, const Json& arr) {
  std::size_t k = 0;
  net.for_each_param([&](const std::string& name, auto& m) {
    if (k >= arr.size()) throw ValidationError("checkpoint: missing parameter block '" + name + "'");
    const auto& b = arr[k++];
    if (b.at("name").get<std::string>() != name || b.at("rows").get<Eigen::Index>() != m.rows() ||
        b.at("cols").get<Eigen::Index>() != m.cols())
      throw ValidationError("checkpoint: parameter block '" + name + "' has unexpected name or shape");
    const auto data = b.at("data").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(data.size()) != m.size())
      throw ValidationError("checkpoint: parameter block '" + name + "' has wrong length");
    std::copy(data.begin(), data.end(), m.data());
  });
  if (k != arr.size()) throw ValidationError("checkpoint: unexpected extra parameter blocks");
}

}  // namespace ckpt_detail

inline Json to_json(const Checkpoint& c) {
  using namespace ckpt_detail;
  Json curve = Json::array();
  for (const auto& r : c.state.curve)
    curve.push_back({r.iteration, r.loss.simple, r.loss.spf, r.loss.erf, r.loss.srf, r.loss.total});
  Json j = {{"format", "dgforge-checkpoint"},
            {"version", 1},
            {"config", to_json(c.config)},
            {"pose_dim", c.state.net.pose_dim},
            {"normalizer", {{"mean", vec_json(c.normalizer.mean)}, {"std", vec_json(c.normalizer.stddev)}}},
            {"iteration", c.state.iteration},
            {"params", params_json(c.state.net)},
            {"ema_params", params_json(c.state.ema)},
            {"curve", curve}};
  if (c.state.adam_m.size() > 0) j["adam"] = {{"m", vec_json(c.state.adam_m)}, {"v", vec_json(c.state.adam_v)}};
  return j;
}

inline Checkpoint checkpoint_from_json(const Json& j) {
  using namespace ckpt_detail;
  if (j.value("format", "") != "dgforge-checkpoint") throw ValidationError("checkpoint: unrecognized format");
  if (j.value("version", 0) != 1) throw ValidationError("checkpoint: unsupported version");
  Checkpoint c;
  try {
    c.config = config_from_json(j.at("config"));
    const int pose_dim = j.at("pose_dim").get<int>();
    c.normalizer.mean = json_vec(j.at("normalizer").at("mean"));
    c.normalizer.stddev = json_vec(j.at("normalizer").at("std"));
    if (c.normalizer.mean.size() != pose_dim || c.normalizer.stddev.size() != pose_dim)
      throw ValidationError("checkpoint: normalizer dimension does not match pose_dim");
    c.state.net = GraspNet::make(c.config.net, pose_dim, 0);
    assign_params(c.state.net, j.at("params"));
    c.state.ema = c.state.net;
    assign_params(c.state.ema, j.at("ema_params"));
    c.state.iteration = j.at("iteration").get<long>();
    for (const auto& r : j.at("curve")) {
      LossRecord rec;
      rec.iteration = r.at(0).get<long>();
      rec.loss = {r.at(1).get<double>(), r.at(2).get<double>(), r.at(3).get<double>(), r.at(4).get<double>(),
                  r.at(5).get<double>()};
      c.state.curve.push_back(rec);
    }
    if (j.contains("adam")) {
      c.state.adam_m = json_vec(j["adam"].at("m"));
      c.state.adam_v = json_vec(j["adam"].at("v"));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("checkpoint: malformed (") + e.what() + ")");
  }
  return c;
}

inline Checkpoint load_checkpoint(const std::string& path) {
  return checkpoint_from_json(parse_json_text(read_text_file(path), path));
}

inline std::string loss_curve_csv(const std::vector<LossRecord>& curve) {
  std::string s = "iteration,L_simple,L_SPF,L_ERF,L_SRF,total\n";
  for (const auto& r : curve) {
    s += std::to_string(r.iteration);
    for (double v : {r.loss.simple, r.loss.spf, r.loss.erf, r.loss.srf, r.loss.total}) s += "," + format_real(v);
    s += "\n";
  }
  return s;
}

}  // namespace dgforge
