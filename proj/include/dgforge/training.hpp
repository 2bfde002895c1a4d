#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "dgforge/diffusion.hpp"
#include "dgforge/error.hpp"
#include "dgforge/kinematics.hpp"
#include "dgforge/nn.hpp"
#include "dgforge/object.hpp"
#include "dgforge/objectives.hpp"

namespace dgforge {

struct TrainConfig {
  double learning_rate = 0.05;
  int batch_size = 32;
  int iterations = 2000;
  double clip_norm = 1.0;
  double ema_decay = 0.0;        // 0 keeps the EMA equal to the live weights
  std::string optimizer = "sgd";  // "sgd" or "adam"
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  double divergence_limit = 1e6;
  bool log_physics = true;        // evaluate constraint terms for the loss curve even when unweighted
  int physics_max_t = 0;          // physics term only for t <= this (0: every step)

  void validate() const {
    require(batch_size >= 1, "train: batch_size must be >= 1");
    require(learning_rate >= 0.0, "train: learning_rate must be >= 0");
    require(iterations >= 0, "train: iterations must be >= 0");
    require(physics_max_t >= 0, "train: physics_max_t must be >= 0");
    require(clip_norm > 0.0, "train: clip_norm must be > 0");
    require(ema_decay >= 0.0 && ema_decay < 1.0, "train: ema_decay must be in [0, 1)");
    require(optimizer == "sgd" || optimizer == "adam", "train: optimizer must be 'sgd' or 'adam'");
  }
};

struct TrainExample {
  Vec pose;          // physical units
  std::size_t object = 0;
};

/// Training inputs that do not change across iterations.
struct TrainSet {
  const KinematicHandModel* model = nullptr;
  std::vector<const ObjectAsset*> objects;
  std::vector<TrainExample> examples;
  PoseNormalizer normalizer;
};

struct LossComponents {
  double simple = 0.0;
  double spf = 0.0, erf = 0.0, srf = 0.0;
  double total = 0.0;
};

struct LossRecord {
  long iteration = 0;
  LossComponents loss;
};

/// One fully specified training draw; making it explicit lets tests freeze a
/// batch and finite-difference the loss.
struct BatchItem {
  std::size_t example = 0;
  int t = 1;
  Vec noise;
  Eigen::Matrix3Xd encoder_points;
};

inline std::vector<BatchItem> draw_batch(const TrainSet& data, const NoiseSchedule& schedule, int batch_size,
                                         std::size_t encoder_points, std::uint64_t seed, long iteration) {
  require(!data.examples.empty(), "training: dataset is empty");
  std::vector<BatchItem> batch(batch_size);
  const int n = data.model->pose_dim();
  for (int b = 0; b < batch_size; ++b) {
    CounterRng rng(seed, static_cast<std::uint64_t>(iteration), static_cast<std::uint64_t>(b));
    auto& item = batch[b];
    item.example = rng.below(data.examples.size());
    item.t = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(schedule.T)));
    item.noise = normal_vector(n, rng);
    item.encoder_points = data.objects[data.examples[item.example].object]->random_encoder_points(encoder_points, rng);
  }
  return batch;
}

/// Batch-mean of L_simple + sum_i alpha_i L_PA_i(h0_hat) and its parameter
/// gradient. The physics terms reach the network through
/// d(h0_hat)/d(eps_hat) = -sqrt(1 - abar_t) / sqrt(abar_t), and through the
/// normalizer's per-dimension scale.
inline LossComponents loss_padg(const GraspNet& net, const TrainSet& data, const NoiseSchedule& schedule,
                                const ConstraintConfig& constraints, const std::vector<BatchItem>& batch,
                                GraspNet* grads, bool log_physics = true, int physics_max_t = 0) {
  require(!batch.empty(), "loss_padg: empty batch");
  const auto B = static_cast<Eigen::Index>(batch.size());
  const int n = net.pose_dim;
  require(data.model->pose_dim() == n, "loss_padg: network and hand model pose dimensions differ");
  const bool physics = !constraints.weights.all_zero();

  std::vector<EncoderCache> enc_cache(B);
  Matrix features(net.config.feature_dim(), B);
  Matrix ht(n, B), noise(n, B);
  std::vector<int> steps(B);
  for (Eigen::Index b = 0; b < B; ++b) {
    const auto& item = batch[b];
    const auto& ex = data.examples[item.example];
    features.col(b) = encoder_forward(net, item.encoder_points, grads ? &enc_cache[b] : nullptr);
    ht.col(b) = forward_corrupt(data.normalizer.normalize(ex.pose), item.t, schedule, item.noise);
    noise.col(b) = item.noise;
    steps[b] = item.t;
  }
  if (net.config.semantic_dim > 0) throw ValidationError("loss_padg: semantic features are not supported in training");

  Mlp::Cache cache;
  const Matrix eps_hat = denoiser_forward(net, ht, steps, features, nullptr, grads ? &cache : nullptr);
  const Matrix resid = eps_hat - noise;

  LossComponents out;
  Matrix d_eps = (2.0 / static_cast<double>(B)) * resid;
  for (Eigen::Index b = 0; b < B; ++b) out.simple += resid.col(b).squaredNorm();
  out.simple /= static_cast<double>(B);

  double weighted = 0.0;
  if (physics || log_physics) {
    for (Eigen::Index b = 0; b < B; ++b) {
      const auto& item = batch[b];
      const bool active = physics && (physics_max_t <= 0 || item.t <= physics_max_t);
      if (!active && !log_physics) continue;
      const ObjectAsset& obj = *data.objects[data.examples[item.example].object];
      const Vec h0n = estimate_h0(ht.col(b), eps_hat.col(b), item.t, schedule);
      const HandPose h0(data.normalizer.denormalize(h0n));
      ConstraintBreakdown c;
      try {
        c = evaluate_constraints(h0, *data.model, *obj.loss_index, constraints, active && grads);
      } catch (const ValidationError& e) {
        // Degenerate rot6d in a garbage estimate; the sample contributes no physics term.
        continue;
      }
      out.spf += c.spf.value;
      out.erf += c.erf.value;
      out.srf += c.srf.value;
      if (!std::isfinite(c.spf.value)) throw NumericalError("loss_padg: non-finite SPF value");
      if (!std::isfinite(c.erf.value)) throw NumericalError("loss_padg: non-finite ERF value");
      if (!std::isfinite(c.srf.value)) throw NumericalError("loss_padg: non-finite SRF value");
      if (active) weighted += c.total.value;
      if (active && grads) {
        const Vec g = data.normalizer.grad_to_normalized(c.total.grad_pose);
        d_eps.col(b) += (h0_eps_factor(item.t, schedule) / static_cast<double>(B)) * g;
      }
    }
    out.spf /= static_cast<double>(B);
    out.erf /= static_cast<double>(B);
    out.srf /= static_cast<double>(B);
  }
  out.total = out.simple + weighted / static_cast<double>(B);

  if (grads) {
    if (!d_eps.allFinite()) throw NumericalError("loss_padg: non-finite gradient w.r.t. predicted noise (physics terms)");
    const Matrix d_in = net.denoiser.backward(cache, d_eps, grads->denoiser);
    const int fo = n + net.config.time_dim;
    for (Eigen::Index b = 0; b < B; ++b)
      encoder_backward(net, enc_cache[b], d_in.col(b).segment(fo, net.config.feature_dim()), *grads);
    bool finite = true;
    grads->for_each_param([&](const std::string&, const auto& m) { finite = finite && m.allFinite(); });
    if (!finite) throw NumericalError("loss_padg: non-finite parameter gradient (L_simple backprop)");
  }
  return out;
}

/// Everything needed to continue training exactly where it stopped.
struct TrainState {
  GraspNet net;
  GraspNet ema;
  Vec adam_m, adam_v;
  long iteration = 0;
  std::vector<LossRecord> curve;
};

inline TrainState init_train_state(const NetConfig& net_cfg, int pose_dim, std::uint64_t seed) {
  TrainState s;
  s.net = GraspNet::make(net_cfg, pose_dim, seed);
  s.ema = s.net;
  return s;
}

/// Gradient descent with global-norm clipping on the physics-aware loss.
/// Runs `cfg.iterations` more iterations from `state.iteration`.
inline void train(TrainState& state, const TrainSet& data, const NoiseSchedule& schedule,
                  const ConstraintConfig& constraints, const TrainConfig& cfg,
                  const std::function<void(const LossRecord&)>& on_iteration = {}) {
  cfg.validate();
  constraints.validate();
  require(!data.examples.empty(), "train: dataset is empty");
  const std::size_t enc_points = static_cast<std::size_t>(state.net.config.encoder_points);
  const Eigen::Index P = state.net.num_params();
  if (cfg.optimizer == "adam" && state.adam_m.size() != P) {
    state.adam_m = Vec::Zero(P);
    state.adam_v = Vec::Zero(P);
  }
  for (int k = 0; k < cfg.iterations; ++k) {
    const long it = state.iteration;
    const auto batch = draw_batch(data, schedule, cfg.batch_size, enc_points, cfg.seed, it);
    GraspNet grads = state.net.zeros_like();
    const LossComponents loss =
        loss_padg(state.net, data, schedule, constraints, batch, &grads, cfg.log_physics, cfg.physics_max_t);
    if (!std::isfinite(loss.total) || loss.total > cfg.divergence_limit)
      throw NumericalError("train: loss diverged at iteration " + std::to_string(it) + " (total " +
                           std::to_string(loss.total) + ")");
    Vec g = grads.flatten();
    const double norm = g.norm();
    if (norm > cfg.clip_norm) g *= cfg.clip_norm / norm;
    Vec p = state.net.flatten();
    if (cfg.optimizer == "adam") {
      const double t = static_cast<double>(it + 1);
      state.adam_m = cfg.adam_beta1 * state.adam_m + (1.0 - cfg.adam_beta1) * g;
      state.adam_v = cfg.adam_beta2 * state.adam_v + (1.0 - cfg.adam_beta2) * g.cwiseAbs2();
      const double c1 = 1.0 - std::pow(cfg.adam_beta1, t);
      const double c2 = 1.0 - std::pow(cfg.adam_beta2, t);
      p.array() -= cfg.learning_rate * (state.adam_m.array() / c1) /
                   ((state.adam_v.array() / c2).sqrt() + cfg.adam_eps);
    } else {
      p -= cfg.learning_rate * g;
    }
    if (cfg.learning_rate > 0.0) state.net.assign(p);
    if (cfg.ema_decay > 0.0) {
      state.ema.assign(cfg.ema_decay * state.ema.flatten() + (1.0 - cfg.ema_decay) * state.net.flatten());
    } else {
      state.ema = state.net;
    }
    LossRecord rec{it, loss};
    state.curve.push_back(rec);
    ++state.iteration;
    if (on_iteration) on_iteration(rec);
  }
}

}  // namespace dgforge
