#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace dgforge;

namespace {

NetConfig small_config() {
  NetConfig c;
  c.encoder_widths = {8, 8};
  c.hidden = {8, 8};
  c.time_dim = 4;
  return c;
}

Eigen::Matrix3Xd random_points(int n, CounterRng& r) {
  Eigen::Matrix3Xd p(3, n);
  for (int i = 0; i < 3 * n; ++i) p.data()[i] = r.uniform(-0.05, 0.05);
  return p;
}

/// Scalar probe: <w, eps(h, t, encoder(points))>.
double probe(const GraspNet& net, const Vec& h, int t, const Eigen::Matrix3Xd& pts, const Vec& w) {
  return w.dot(denoiser_forward(net, h, t, encoder_forward(net, pts)));
}

}  // namespace

TEST(Mlp, ZeroWeightsGiveZeroOutput) {
  CounterRng r(1);
  Mlp m = Mlp::make({3, 5, 2}, Activation::silu, Activation::none, r).zeros_like();
  EXPECT_TRUE(m.forward(Matrix::Random(3, 4)).isZero(0.0));
}

TEST(Mlp, RejectsBadWidths) {
  CounterRng r(1);
  EXPECT_THROW(Mlp::make({3}, Activation::relu, Activation::none, r), ValidationError);
  EXPECT_THROW(Mlp::make({3, 0, 1}, Activation::relu, Activation::none, r), ValidationError);
}

TEST(GraspNet, DeterministicForward) {
  const auto net = GraspNet::make(small_config(), 7, 3);
  CounterRng r(2);
  const auto pts = random_points(20, r);
  const Vec h = normal_vector(7, r);
  const Vec a = denoiser_forward(net, h, 5, encoder_forward(net, pts));
  const Vec b = denoiser_forward(net, h, 5, encoder_forward(net, pts));
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.size(), 7);
}

TEST(GraspNet, FlattenAssignRoundTrip) {
  auto net = GraspNet::make(small_config(), 7, 3);
  const Vec p = net.flatten();
  auto other = GraspNet::make(small_config(), 7, 4);
  other.assign(p);
  EXPECT_EQ(other.flatten(), p);
  EXPECT_THROW(other.assign(Vec::Zero(3)), ValidationError);
}

TEST(Encoder, PermutationDuplicationAndSinglePoint) {
  const auto net = GraspNet::make(small_config(), 7, 5);
  CounterRng r(3);
  const auto pts = random_points(30, r);
  Eigen::Matrix3Xd perm(3, 30), dup(3, 60);
  for (int i = 0; i < 30; ++i) {
    perm.col(i) = pts.col((i * 7) % 30);
    dup.col(2 * i) = pts.col(i);
    dup.col(2 * i + 1) = pts.col(i);
  }
  const Vec f = encoder_forward(net, pts);
  EXPECT_EQ(encoder_forward(net, perm), f);
  EXPECT_EQ(encoder_forward(net, dup), f);
  const Eigen::Matrix3Xd one = pts.col(4);
  EXPECT_EQ(encoder_forward(net, one), net.encoder.forward(one).col(0));
}

TEST(Denoiser, ShapeErrors) {
  const auto net = GraspNet::make(small_config(), 7, 5);
  const Vec feat = Vec::Zero(8);
  EXPECT_THROW(denoiser_forward(net, Vec::Zero(6), 1, feat), ValidationError);
  EXPECT_THROW(denoiser_forward(net, Vec::Zero(7), 1, Vec::Zero(3)), ValidationError);
  const Vec sem = Vec::Zero(2);
  EXPECT_THROW(denoiser_forward(net, Vec::Zero(7), 1, feat, &sem), ValidationError);
}

TEST(Denoiser, SemanticSlot) {
  auto cfg = small_config();
  cfg.semantic_dim = 3;
  const auto net = GraspNet::make(cfg, 7, 5);
  const Vec feat = Vec::Zero(8), sem = Vec::Ones(3);
  EXPECT_EQ(denoiser_forward(net, Vec::Zero(7), 1, feat, &sem).size(), 7);
  EXPECT_THROW(denoiser_forward(net, Vec::Zero(7), 1, feat), ValidationError);
}

TEST(Backprop, ParameterAndInputGradientsMatchFiniteDifferences) {
  auto net = GraspNet::make(small_config(), 7, 6);
  CounterRng r(4);
  const auto pts = random_points(12, r);
  const Vec h = normal_vector(7, r), w = normal_vector(7, r);
  const int t = 9;
  EncoderCache ec;
  const Vec feat = encoder_forward(net, pts, &ec);
  Mlp::Cache dc;
  denoiser_forward(net, Matrix(h), {t}, Matrix(feat), nullptr, &dc);
  GraspNet grads = net.zeros_like();
  const Matrix d_in = net.denoiser.backward(dc, Matrix(w), grads.denoiser);
  encoder_backward(net, ec, d_in.col(0).segment(7 + 4, 8), grads);

  const Vec p0 = net.flatten();
  const Vec num = oracle::fd_gradient(
      [&](const Vec& p) {
        GraspNet n2 = net;
        n2.assign(p);
        return probe(n2, h, t, pts, w);
      },
      p0);
  EXPECT_LT(oracle::rel_error(grads.flatten(), num), 1e-4);

  const Vec num_in = oracle::fd_gradient([&](const Vec& x) { return probe(net, x, t, pts, w); }, h);
  EXPECT_LT(oracle::rel_error(d_in.col(0).head(7), num_in), 1e-4);
}

TEST(TimeEmbedding, SinCosLayout) {
  const Vec e = time_embedding(3, 6);
  EXPECT_DOUBLE_EQ(e[0], std::sin(3.0));
  EXPECT_DOUBLE_EQ(e[3], std::cos(3.0));
}
