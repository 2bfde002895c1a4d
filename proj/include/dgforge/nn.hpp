#pragma once

#include <Eigen/Core>

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "dgforge/error.hpp"
#include "dgforge/rng.hpp"

namespace dgforge {

using Matrix = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

enum class Activation { none, relu, silu };

inline const char* activation_name(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::silu: return "silu";
    case Activation::none: break;
  }
  return "none";
}

/// Fully connected layer y = W x + b applied column-wise.
struct Dense {
  Matrix W;  // out x in
  Vec b;
  Activation act = Activation::none;

  Eigen::Index in() const { return W.cols(); }
  Eigen::Index out() const { return W.rows(); }
};

/// Stack of dense layers with hand-written reverse pass.
struct Mlp {
  std::vector<Dense> layers;

  struct Cache {
    std::vector<Matrix> inputs;  // input to each layer
    std::vector<Matrix> pre;     // pre-activation of each layer
  };

  Eigen::Index in() const { return layers.front().in(); }
  Eigen::Index out() const { return layers.back().out(); }

  static Mlp make(const std::vector<int>& widths, Activation hidden, Activation last, CounterRng& rng) {
    require(widths.size() >= 2, "mlp needs at least an input and output width");
    Mlp m;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
      require(widths[i] >= 1 && widths[i + 1] >= 1, "mlp widths must be >= 1");
      Dense d;
      d.W.resize(widths[i + 1], widths[i]);
      const double scale = std::sqrt(2.0 / widths[i]);
      for (Eigen::Index k = 0; k < d.W.size(); ++k) d.W.data()[k] = scale * rng.normal();
      d.b = Vec::Zero(widths[i + 1]);
      d.act = i + 2 == widths.size() ? last : hidden;
      m.layers.push_back(std::move(d));
    }
    return m;
  }

  Matrix forward(const Matrix& x, Cache* cache = nullptr) const {
    Matrix h = x;
    if (cache) {
      cache->inputs.clear();
      cache->pre.clear();
    }
    for (const auto& layer : layers) {
      Matrix z = layer.W * h;
      z.colwise() += layer.b;
      if (cache) {
        cache->inputs.push_back(std::move(h));
        cache->pre.push_back(z);
      }
      h = activate(z, layer.act);
    }
    return h;
  }

  /// Accumulates parameter gradients into `grads` (same shapes as *this) and
  /// returns the gradient with respect to the input.
  Matrix backward(const Cache& cache, const Matrix& d_out, Mlp& grads) const {
    Matrix g = d_out;
    for (std::size_t li = layers.size(); li-- > 0;) {
      const auto& layer = layers[li];
      const Matrix& z = cache.pre[li];
      apply_activation_grad(z, layer.act, g);
      grads.layers[li].W.noalias() += g * cache.inputs[li].transpose();
      grads.layers[li].b += g.rowwise().sum();
      g = layer.W.transpose() * g;
    }
    return g;
  }

  Mlp zeros_like() const {
    Mlp m = *this;
    for (auto& l : m.layers) {
      l.W.setZero();
      l.b.setZero();
    }
    return m;
  }

  static Matrix activate(const Matrix& z, Activation a) {
    switch (a) {
      case Activation::relu: return z.cwiseMax(0.0);
      case Activation::silu: return z.unaryExpr([](double v) { return v / (1.0 + std::exp(-v)); });
      case Activation::none: break;
    }
    return z;
  }

  static void apply_activation_grad(const Matrix& z, Activation a, Matrix& g) {
    switch (a) {
      case Activation::relu:
        g = g.cwiseProduct(z.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; }));
        break;
      case Activation::silu:
        g = g.cwiseProduct(z.unaryExpr([](double v) {
          const double s = 1.0 / (1.0 + std::exp(-v));
          return s * (1.0 + v * (1.0 - s));
        }));
        break;
      case Activation::none: break;
    }
  }
};

/// Sinusoidal embedding of an integer diffusion step.
inline Vec time_embedding(int t, int dim) {
  Vec e(dim);
  const int half = dim / 2;
  for (int k = 0; k < half; ++k) {
    const double freq = std::exp(-std::log(10000.0) * k / std::max(half, 1));
    e[k] = std::sin(t * freq);
    e[half + k] = std::cos(t * freq);
  }
  if (dim % 2) e[dim - 1] = 0.0;
  return e;
}

struct NetConfig {
  std::vector<int> encoder_widths = {64, 128};  // per-point layers after the xyz input
  std::vector<int> hidden = {256, 256};
  int time_dim = 32;
  int semantic_dim = 0;  // 0: no semantic slot
  int encoder_points = 256;

  int feature_dim() const { return encoder_widths.back(); }
};

/// PointNet-style object encoder (shared per-point MLP + max-pool) and the
/// conditional noise predictor eps(h_t, t, object[, semantic]).
struct GraspNet {
  NetConfig config;
  int pose_dim = 0;
  Mlp encoder;
  Mlp denoiser;

  static GraspNet make(const NetConfig& cfg, int pose_dim, std::uint64_t seed) {
    require(pose_dim >= 1, "network: pose dimension must be >= 1");
    require(!cfg.encoder_widths.empty() && !cfg.hidden.empty(), "network: empty layer widths");
    require(cfg.time_dim >= 2 && cfg.semantic_dim >= 0, "network: bad time/semantic dims");
    GraspNet net;
    net.config = cfg;
    net.pose_dim = pose_dim;
    CounterRng rng(seed, 0x6e6574);
    std::vector<int> ew = {3};
    ew.insert(ew.end(), cfg.encoder_widths.begin(), cfg.encoder_widths.end());
    net.encoder = Mlp::make(ew, Activation::relu, Activation::relu, rng);
    std::vector<int> dw = {net.denoiser_input_dim()};
    dw.insert(dw.end(), cfg.hidden.begin(), cfg.hidden.end());
    dw.push_back(pose_dim);
    net.denoiser = Mlp::make(dw, Activation::silu, Activation::none, rng);
    return net;
  }

  int denoiser_input_dim() const {
    return pose_dim + config.time_dim + config.feature_dim() + config.semantic_dim;
  }

  template <typename Self, typename Fn>
  static void visit_params(Self& self, Fn& fn) {
    for (std::size_t i = 0; i < self.encoder.layers.size(); ++i) {
      fn("encoder." + std::to_string(i) + ".W", self.encoder.layers[i].W);
      fn("encoder." + std::to_string(i) + ".b", self.encoder.layers[i].b);
    }
    for (std::size_t i = 0; i < self.denoiser.layers.size(); ++i) {
      fn("denoiser." + std::to_string(i) + ".W", self.denoiser.layers[i].W);
      fn("denoiser." + std::to_string(i) + ".b", self.denoiser.layers[i].b);
    }
  }

  GraspNet zeros_like() const {
    GraspNet g = *this;
    g.encoder = encoder.zeros_like();
    g.denoiser = denoiser.zeros_like();
    return g;
  }

  /// All parameter blocks in a fixed order with stable names.
  template <typename Fn>
  void for_each_param(Fn&& fn) {
    visit_params(*this, fn);
  }
  template <typename Fn>
  void for_each_param(Fn&& fn) const {
    visit_params(*this, fn);
  }

  Eigen::Index num_params() const {
    Eigen::Index n = 0;
    for_each_param([&](const std::string&, const auto& m) { n += m.size(); });
    return n;
  }

  Vec flatten() const {
    Vec v(num_params());
    Eigen::Index o = 0;
    for_each_param([&](const std::string&, const auto& m) {
      v.segment(o, m.size()) = Eigen::Map<const Vec>(m.data(), m.size());
      o += m.size();
    });
    return v;
  }

  void assign(const Vec& v) {
    require(v.size() == num_params(), "network: flat parameter length mismatch");
    Eigen::Index o = 0;
    for_each_param([&](const std::string&, auto& m) {
      Eigen::Map<Vec>(m.data(), m.size()) = v.segment(o, m.size());
      o += m.size();
    });
  }
};

struct EncoderCache {
  Mlp::Cache mlp;
  std::vector<Eigen::Index> argmax;  // winning point per feature channel
  Eigen::Index num_points = 0;
};

/// Per-point features max-pooled over points (ties: lowest point index).
inline Vec encoder_forward(const GraspNet& net, const Eigen::Matrix3Xd& points, EncoderCache* cache = nullptr) {
  require(points.cols() >= 1, "encoder: need at least one point");
  const Matrix feats = net.encoder.forward(points, cache ? &cache->mlp : nullptr);
  Vec pooled(feats.rows());
  std::vector<Eigen::Index> arg(feats.rows(), 0);
  for (Eigen::Index c = 0; c < feats.rows(); ++c) {
    double best = feats(c, 0);
    for (Eigen::Index j = 1; j < feats.cols(); ++j) {
      if (feats(c, j) > best) {
        best = feats(c, j);
        arg[c] = j;
      }
    }
    pooled[c] = best;
  }
  if (cache) {
    cache->argmax = std::move(arg);
    cache->num_points = points.cols();
  }
  return pooled;
}

/// Reverse pass of the encoder for one pooled feature gradient.
inline void encoder_backward(const GraspNet& net, const EncoderCache& cache, const Vec& d_feature, GraspNet& grads) {
  Matrix d_out = Matrix::Zero(d_feature.size(), cache.num_points);
  for (Eigen::Index c = 0; c < d_feature.size(); ++c) d_out(c, cache.argmax[c]) = d_feature[c];
  net.encoder.backward(cache.mlp, d_out, grads.encoder);
}

/// Assembles denoiser inputs column-wise: [h_t; time; object; semantic].
inline Matrix denoiser_input(const GraspNet& net, const Matrix& ht, const std::vector<int>& steps,
                             const Matrix& features, const Matrix* semantic = nullptr) {
  const auto B = ht.cols();
  if (ht.rows() != net.pose_dim)
    throw ValidationError("denoiser: h_t has " + std::to_string(ht.rows()) + " rows, expected " +
                          std::to_string(net.pose_dim));
  require(static_cast<Eigen::Index>(steps.size()) == B, "denoiser: step count does not match batch");
  require(features.rows() == net.config.feature_dim() && features.cols() == B,
          "denoiser: object feature shape mismatch");
  const int sd = net.config.semantic_dim;
  if (sd > 0) {
    require(semantic != nullptr && semantic->rows() == sd && semantic->cols() == B,
            "denoiser: semantic feature required with shape (semantic_dim x batch)");
  } else {
    require(semantic == nullptr || semantic->size() == 0, "denoiser: semantic feature given but slot disabled");
  }
  Matrix x(net.denoiser_input_dim(), B);
  const int n = net.pose_dim, td = net.config.time_dim, fd = net.config.feature_dim();
  x.topRows(n) = ht;
  for (Eigen::Index b = 0; b < B; ++b) x.col(b).segment(n, td) = time_embedding(steps[b], td);
  x.middleRows(n + td, fd) = features;
  if (sd > 0) x.bottomRows(sd) = *semantic;
  return x;
}

inline Matrix denoiser_forward(const GraspNet& net, const Matrix& ht, const std::vector<int>& steps,
                               const Matrix& features, const Matrix* semantic = nullptr,
                               Mlp::Cache* cache = nullptr) {
  return net.denoiser.forward(denoiser_input(net, ht, steps, features, semantic), cache);
}

inline Vec denoiser_forward(const GraspNet& net, const Vec& ht, int t, const Vec& feature,
                            const Vec* semantic = nullptr) {
  Matrix sem;
  if (semantic) sem = *semantic;
  return denoiser_forward(net, Matrix(ht), std::vector<int>{t}, Matrix(feature), semantic ? &sem : nullptr).col(0);
}

}  // namespace dgforge
