#include <gtest/gtest.h>

#include "moment_checks.hpp"
#include "oracles.hpp"

using namespace dgforge;

TEST(Schedule, TwoStepProducts) {
  const auto s = make_schedule(2, 0.1, 0.2);
  EXPECT_DOUBLE_EQ(s.alpha[0], 0.9);
  EXPECT_DOUBLE_EQ(s.alpha[1], 0.8);
  EXPECT_DOUBLE_EQ(s.alpha_bar[0], 0.9);
  EXPECT_DOUBLE_EQ(s.alpha_bar[1], 0.9 * 0.8);
  EXPECT_NEAR(s.alpha_bar[1], 0.72, 1e-15);
}

TEST(Schedule, SingleStep) {
  const auto s = make_schedule(1, 0.3, 0.3);
  EXPECT_DOUBLE_EQ(s.alpha_bar[0], 0.7);
  EXPECT_EQ(s.posterior_var[0], 0.0);
}

TEST(Schedule, HundredStepProductOracle) {
  for (auto [b0, b1] : {std::pair{1e-4, 0.02}, std::pair{1e-3, 0.2}}) {
    const auto s = make_schedule(100, b0, b1);
    long double prod = 1.0L;
    for (int i = 0; i < 100; ++i) prod *= 1.0L - (b0 + (b1 - b0) * i / 99.0L);
    EXPECT_NEAR(s.alpha_bar[99], static_cast<double>(prod), 1e-12);
    for (int t = 2; t <= 100; ++t) {
      EXPECT_LE(s.beta_at(t - 1), s.beta_at(t));
      EXPECT_LT(s.alpha_bar_at(t), s.alpha_bar_at(t - 1));
      EXPECT_EQ(s.alpha_bar_at(t), s.alpha_bar_at(t - 1) * s.alpha_at(t));
      EXPECT_DOUBLE_EQ(s.posterior_var_at(t),
                       s.beta_at(t) * (1 - s.alpha_bar_at(t - 1)) / (1 - s.alpha_bar_at(t)));
    }
  }
}

TEST(Schedule, RejectsBadArguments) {
  EXPECT_THROW(make_schedule(0, 0.1, 0.2), ValidationError);
  EXPECT_THROW(make_schedule(5, 0.3, 0.2), ValidationError);
  EXPECT_THROW(make_schedule(5, 0.1, 1.0), ValidationError);
  const auto s = make_schedule(5, 0.1, 0.2);
  EXPECT_THROW(s.check_step(0), ValidationError);
  EXPECT_THROW(s.check_step(6), ValidationError);
}

TEST(ForwardCorrupt, ZeroNoiseAndZeroSignal) {
  const auto s = make_schedule(10, 1e-3, 0.2);
  Vec h0(3);
  h0 << 1, -2, 0.5;
  const Vec z = Vec::Zero(3);
  EXPECT_EQ(forward_corrupt(h0, 4, s, z), std::sqrt(s.alpha_bar_at(4)) * h0);
  EXPECT_EQ(forward_corrupt(z, 4, s, h0), std::sqrt(1 - s.alpha_bar_at(4)) * h0);
  EXPECT_THROW(forward_corrupt(h0, 4, s, Vec::Zero(2)), ValidationError);
}

TEST(EstimateH0, RoundTripAndLinearity) {
  const auto s = make_schedule(100, 1e-3, 0.2);
  CounterRng r(1);
  for (int t : {1, 17, 50, 100}) {
    const Vec h0 = normal_vector(33, r), eps = normal_vector(33, r), delta = normal_vector(33, r);
    const Vec ht = forward_corrupt(h0, t, s, eps);
    EXPECT_LT((estimate_h0(ht, eps, t, s) - h0).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_EQ(estimate_h0(ht, Vec::Zero(33), t, s), ht / std::sqrt(s.alpha_bar_at(t)));
    const Vec shift = estimate_h0(ht, eps + delta, t, s) - estimate_h0(ht, eps, t, s);
    EXPECT_LT((shift - h0_eps_factor(t, s) * delta).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(PosteriorStep, FinalStepIsTheMean) {
  const auto s = make_schedule(10, 1e-3, 0.2);
  CounterRng r(2);
  const Vec ht = normal_vector(5, r), eps = normal_vector(5, r), noise = normal_vector(5, r);
  const auto st = posterior_step(ht, eps, 1, s, noise);
  EXPECT_EQ(st.prev, st.mean);
}

TEST(PosteriorStep, OneDimensionalClosedForm) {
  // With eps = (h_t - sqrt(abar_t) h0) / sqrt(1 - abar_t) the mean equals
  // the true posterior mean of q(h_{t-1} | h_t, h0).
  const auto s = make_schedule(10, 0.01, 0.3);
  const int t = 6;
  const double h0 = 0.7, ht = -0.4;
  Vec e(1);
  e << (ht - std::sqrt(s.alpha_bar_at(t)) * h0) / std::sqrt(1 - s.alpha_bar_at(t));
  const double ab_prev = s.alpha_bar_prev(t);
  const double expected = std::sqrt(ab_prev) * s.beta_at(t) / (1 - s.alpha_bar_at(t)) * h0 +
                          std::sqrt(s.alpha_at(t)) * (1 - ab_prev) / (1 - s.alpha_bar_at(t)) * ht;
  const auto st = posterior_step(Vec::Constant(1, ht), e, t, s, Vec::Zero(1));
  EXPECT_NEAR(st.mean[0], expected, 1e-14);
}

TEST(PoseNormalizer, RoundTripAndChainRule) {
  std::vector<Vec> poses;
  CounterRng r(3);
  for (int i = 0; i < 50; ++i) poses.push_back(normal_vector(4, r) * 3.0);
  const auto z = PoseNormalizer::fit(poses);
  const Vec x = normal_vector(4, r);
  EXPECT_LT((z.denormalize(z.normalize(x)) - x).cwiseAbs().maxCoeff(), 1e-14);
  Vec n = Vec::Zero(4);
  for (const auto& p : poses) n += z.normalize(p);
  EXPECT_LT(n.cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(z.grad_to_normalized(Vec::Ones(4)), z.stddev);
}


TEST(Moments, CorruptionChainMatchesClosedForm) {
  const auto rep = moments::corruption_moments(5, 20000, 7);
  EXPECT_EQ(rep.checks, 20);
  EXPECT_LT(rep.worst_z, 3.0);
}

TEST(Moments, PosteriorVariance) {
  const auto rep = moments::posterior_moments(5, 20000, 8);
  EXPECT_LT(rep.worst_z, 3.0);
}
