#pragma once

#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "dgforge/geometry.hpp"
#include "dgforge/mesh.hpp"
#include "dgforge/rng.hpp"

namespace dgforge {

struct ObjectSampling {
  std::size_t cloud_points = 2048;    // guidance / evaluation cloud
  std::size_t loss_points = 1024;     // training-time physics subsample
  std::size_t encoder_points = 256;   // encoder input
};

/// First k entries of a seeded permutation of [0, n).
inline std::vector<std::size_t> seeded_subset(std::size_t n, std::size_t k, CounterRng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  k = std::min(k, n);
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
  idx.resize(k);
  return idx;
}

inline std::uint64_t object_seed(const std::string& id) { return fnv1a(id.data(), id.size()); }

/// Object mesh with its derived clouds and indices. Not copyable: the
/// indices point into the clouds held here.
struct ObjectAsset {
  std::string id;
  TriangleMesh mesh;
  PointCloud cloud;
  PointCloud loss_cloud;
  Eigen::Matrix3Xd encoder_points;
  std::unique_ptr<KdTree> index;
  std::unique_ptr<KdTree> loss_index;

  ObjectAsset() = default;
  ObjectAsset(const ObjectAsset&) = delete;
  ObjectAsset& operator=(const ObjectAsset&) = delete;

  static std::unique_ptr<ObjectAsset> make(std::string id, TriangleMesh mesh, const ObjectSampling& s) {
    auto a = std::make_unique<ObjectAsset>();
    a->id = std::move(id);
    a->mesh = std::move(mesh);
    const std::uint64_t seed = object_seed(a->id);
    a->cloud = sample_surface(a->mesh, s.cloud_points, seed);
    CounterRng rng(seed, 0x1055);
    a->loss_cloud = a->cloud.subset(seeded_subset(a->cloud.size(), s.loss_points, rng));
    CounterRng erng(seed, 0xe9c);
    const auto enc = seeded_subset(a->cloud.size(), s.encoder_points, erng);
    a->encoder_points.resize(3, static_cast<Eigen::Index>(enc.size()));
    for (std::size_t k = 0; k < enc.size(); ++k) a->encoder_points.col(static_cast<Eigen::Index>(k)) = a->cloud.point(enc[k]);
    a->index = std::make_unique<KdTree>(a->cloud);
    a->loss_index = std::make_unique<KdTree>(a->loss_cloud);
    return a;
  }

  /// Random encoder subsample (training-time augmentation).
  Eigen::Matrix3Xd random_encoder_points(std::size_t k, CounterRng& rng) const {
    const auto idx = seeded_subset(cloud.size(), k, rng);
    Eigen::Matrix3Xd m(3, static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = cloud.point(idx[i]);
    return m;
  }
};

}  // namespace dgforge
