#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "oracles.hpp"

using namespace dgforge;

namespace {

struct Toy {
  KinematicHandModel model = default_hand();
  std::unique_ptr<ObjectAsset> asset = fixture::asset(fixture::sphere_spec(), 512);
  TrainSet set;
  NoiseSchedule sched = make_schedule(20, 1e-3, 0.2);

  Toy() {
    set.model = &model;
    set.objects = {asset.get()};
    CounterRng r(5);
    std::vector<Vec> poses;
    for (int i = 0; i < 16; ++i) {
      const HandPose p = fixture::near_pose(fixture::sphere_spec(), model, r);
      set.examples.push_back({p.values, 0});
      poses.push_back(p.values);
    }
    set.normalizer = PoseNormalizer::fit(poses);
  }
};

NetConfig small_net() {
  NetConfig c;
  c.encoder_widths = {8, 8};
  c.hidden = {16, 16};
  c.time_dim = 8;
  c.encoder_points = 32;
  return c;
}

}  // namespace

TEST(LossPadg, ZeroWeightsReduceToPlainMse) {
  Toy toy;
  const auto net = GraspNet::make(small_net(), toy.model.pose_dim(), 1);
  const auto batch = draw_batch(toy.set, toy.sched, 6, 32, 3, 0);
  ConstraintConfig cc;
  cc.weights = {0, 0, 0};
  GraspNet g1 = net.zeros_like(), g2 = net.zeros_like();
  const auto a = loss_padg(net, toy.set, toy.sched, cc, batch, &g1, true);
  const auto b = loss_padg(net, toy.set, toy.sched, cc, batch, &g2, false);
  EXPECT_EQ(a.total, a.simple);
  EXPECT_EQ(g1.flatten(), g2.flatten());

  // textbook reduction computed by hand
  const int n = net.pose_dim, B = 6;
  Matrix ht(n, B), noise(n, B), feats(net.config.feature_dim(), B);
  std::vector<int> steps;
  std::vector<EncoderCache> ec(B);
  for (int k = 0; k < B; ++k) {
    const auto& it = batch[k];
    feats.col(k) = encoder_forward(net, it.encoder_points, &ec[k]);
    ht.col(k) = forward_corrupt(toy.set.normalizer.normalize(toy.set.examples[it.example].pose), it.t, toy.sched, it.noise);
    noise.col(k) = it.noise;
    steps.push_back(it.t);
  }
  Mlp::Cache cache;
  const Matrix resid = denoiser_forward(net, ht, steps, feats, nullptr, &cache) - noise;
  EXPECT_DOUBLE_EQ(b.simple, resid.colwise().squaredNorm().sum() / B);
  GraspNet g3 = net.zeros_like();
  const Matrix d_in = net.denoiser.backward(cache, (2.0 / B) * resid, g3.denoiser);
  for (int k = 0; k < B; ++k)
    encoder_backward(net, ec[k], d_in.col(k).segment(n + net.config.time_dim, net.config.feature_dim()), g3);
  EXPECT_EQ(g3.flatten(), g2.flatten());
}

TEST(LossPadg, PhysicsGradientMatchesFiniteDifferences) {
  Toy toy;
  auto net = GraspNet::make(small_net(), toy.model.pose_dim(), 2);
  const auto batch = draw_batch(toy.set, toy.sched, 4, 32, 4, 0);
  ConstraintConfig cc;
  cc.weights = {1, 1, 0.5};
  GraspNet g = net.zeros_like();
  loss_padg(net, toy.set, toy.sched, cc, batch, &g);
  const Vec ga = g.flatten(), p0 = net.flatten();
  CounterRng r(7);
  int checked = 0;
  for (int k = 0; k < 40 && checked < 10; ++k) {
    const auto idx = static_cast<Eigen::Index>(r.below(static_cast<std::uint64_t>(p0.size())));
    if (ga[idx] == 0.0) continue;
    auto f = [&](double dx) {
      GraspNet n2 = net;
      Vec p = p0;
      p[idx] += dx;
      n2.assign(p);
      return loss_padg(n2, toy.set, toy.sched, cc, batch, nullptr).total;
    };
    const double num = (f(1e-6) - f(-1e-6)) / 2e-6;
    EXPECT_LT(std::abs(num - ga[idx]) / std::max(std::abs(num), 1e-8), 1e-3) << "param " << idx;
    ++checked;
  }
  EXPECT_EQ(checked, 10);
}

TEST(LossPadg, PhysicsContributionIsLinearInWeights) {
  Toy toy;
  const auto net = GraspNet::make(small_net(), toy.model.pose_dim(), 3);
  const auto batch = draw_batch(toy.set, toy.sched, 8, 32, 5, 0);
  auto grad = [&](double scale) {
    ConstraintConfig cc;
    cc.weights = ConstraintWeights{1, 1, 0.5}.scaled(scale);
    GraspNet g = net.zeros_like();
    loss_padg(net, toy.set, toy.sched, cc, batch, &g);
    return g.flatten();
  };
  const Vec g0 = grad(0), g1 = grad(1), g2 = grad(2);
  const Vec d1 = g1 - g0, d2 = g2 - g0;
  ASSERT_GT(d1.norm(), 0.0);
  EXPECT_LT((d2 - 2.0 * d1).norm(), 1e-9 * d1.norm());
}

TEST(LossPadg, PhysicsWindowSkipsLargeSteps) {
  Toy toy;
  const auto net = GraspNet::make(small_net(), toy.model.pose_dim(), 3);
  auto batch = draw_batch(toy.set, toy.sched, 4, 32, 5, 0);
  for (auto& b : batch) b.t = 15;
  ConstraintConfig cc;
  GraspNet g1 = net.zeros_like(), g2 = net.zeros_like();
  const auto a = loss_padg(net, toy.set, toy.sched, cc, batch, &g1, false, 10);
  cc.weights = {0, 0, 0};
  loss_padg(net, toy.set, toy.sched, cc, batch, &g2, false);
  EXPECT_EQ(a.total, a.simple);
  EXPECT_EQ(g1.flatten(), g2.flatten());
}

TEST(Train, ZeroLearningRateKeepsParameters) {
  Toy toy;
  for (const char* opt : {"sgd", "adam"}) {
    TrainState s = init_train_state(small_net(), toy.model.pose_dim(), 4);
    const Vec before = s.net.flatten();
    TrainConfig tc;
    tc.learning_rate = 0.0;
    tc.iterations = 3;
    tc.batch_size = 4;
    tc.optimizer = opt;
    train(s, toy.set, toy.sched, ConstraintConfig{}, tc);
    EXPECT_EQ(s.net.flatten(), before) << opt;
    EXPECT_EQ(s.curve.size(), 3u);
  }
}

TEST(Train, SameSeedSameCurveAndResumeIsSeamless) {
  Toy toy;
  TrainConfig tc;
  tc.iterations = 8;
  tc.batch_size = 4;
  tc.optimizer = "adam";
  tc.learning_rate = 1e-3;
  tc.ema_decay = 0.9;
  ConstraintConfig cc;
  TrainState a = init_train_state(small_net(), toy.model.pose_dim(), 5), b = a, c = a;
  train(a, toy.set, toy.sched, cc, tc);
  train(b, toy.set, toy.sched, cc, tc);
  ASSERT_EQ(a.curve.size(), b.curve.size());
  for (std::size_t i = 0; i < a.curve.size(); ++i) EXPECT_EQ(a.curve[i].loss.total, b.curve[i].loss.total);

  TrainConfig half = tc;
  half.iterations = 4;
  train(c, toy.set, toy.sched, cc, half);
  Checkpoint ck;
  ck.config.net = small_net();
  ck.normalizer = toy.set.normalizer;
  ck.state = c;
  Checkpoint back = checkpoint_from_json(Json::parse(to_json(ck).dump()));
  train(back.state, toy.set, toy.sched, cc, half);
  EXPECT_EQ(back.state.net.flatten(), a.net.flatten());
  EXPECT_EQ(back.state.ema.flatten(), a.ema.flatten());
  ASSERT_EQ(back.state.curve.size(), a.curve.size());
  for (std::size_t i = 0; i < a.curve.size(); ++i) EXPECT_EQ(back.state.curve[i].loss.total, a.curve[i].loss.total);
}

TEST(Train, DivergenceAborts) {
  Toy toy;
  TrainState s = init_train_state(small_net(), toy.model.pose_dim(), 6);
  TrainConfig tc;
  tc.iterations = 2;
  tc.divergence_limit = 1e-9;
  EXPECT_THROW(train(s, toy.set, toy.sched, ConstraintConfig{}, tc), NumericalError);
}

TEST(Train, NonFiniteDataAborts) {
  Toy toy;
  for (auto& e : toy.set.examples) e.pose[0] = std::numeric_limits<double>::quiet_NaN();
  TrainState s = init_train_state(small_net(), toy.model.pose_dim(), 6);
  TrainConfig tc;
  tc.iterations = 1;
  EXPECT_THROW(train(s, toy.set, toy.sched, ConstraintConfig{}, tc), NumericalError);
}

TEST(Train, OneDimensionalToyConverges) {
  // Single-sample hand; the data vary along one coordinate only.
  const auto model = fixture::point_hand({{Vec3::Zero()}});
  const auto asset = fixture::asset(fixture::sphere_spec(), 256);
  TrainSet set;
  set.model = &model;
  set.objects = {asset.get()};
  std::vector<Vec> poses;
  CounterRng r(8);
  for (int i = 0; i < 64; ++i) {
    HandPose p = HandPose::identity(0);
    p.trans().x() = 0.05 + 0.01 * r.normal();
    set.examples.push_back({p.values, 0});
    poses.push_back(p.values);
  }
  set.normalizer = PoseNormalizer::fit(poses);
  TrainState s = init_train_state(small_net(), model.pose_dim(), 9);
  TrainConfig tc;
  tc.iterations = 3000;
  tc.batch_size = 32;
  tc.optimizer = "adam";
  tc.learning_rate = 3e-3;
  tc.log_physics = false;
  ConstraintConfig cc;
  cc.weights = {0, 0, 0};
  train(s, set, make_schedule(50, 1e-3, 0.2), cc, tc);
  double first = 0, last = 0;
  for (int i = 0; i < 10; ++i) first += s.curve[i].loss.simple / 10;
  for (int i = 2800; i < 3000; ++i) last += s.curve[i].loss.simple / 200;
  EXPECT_GT(first / last, 10.0) << first << " -> " << last;
}

TEST(TrainConfig, Validation) {
  TrainConfig tc;
  tc.optimizer = "rmsprop";
  EXPECT_THROW(tc.validate(), ValidationError);
  tc = {};
  tc.batch_size = 0;
  EXPECT_THROW(tc.validate(), ValidationError);
}
