#include "featspeed/network.hpp"

#include <gtest/gtest.h>

using namespace featspeed;

TEST(Network, ArchValidation) {
  EXPECT_NO_THROW(ArchSpec::mlp(3, 4, 2, 2).validate());
  EXPECT_THROW(ArchSpec::mlp(3, 4, 2, 1).validate(), std::invalid_argument);
  EXPECT_THROW(ArchSpec::mlp(0, 4, 2, 3).validate(), std::invalid_argument);
  EXPECT_THROW(ArchSpec::resnet(3, 4, 2, 3, 1.5).validate(), std::invalid_argument);
  ArchSpec bad = ArchSpec::mlp(3, 4, 2, 3);
  bad.beta = 0.5;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  EXPECT_DOUBLE_EQ(ArchSpec::resnet(3, 4, 2, 3, 0.6).skip(), 0.8);
}

TEST(Network, ParseSetting) {
  EXPECT_EQ(parse_setting("Dense"), Setting::Dense);
  EXPECT_EQ(parse_setting("sparse"), Setting::Sparse);
  EXPECT_THROW(parse_setting("other"), std::invalid_argument);
}

TEST(Network, InputAndLossNormalization) {
  const Vec xd = make_input(Setting::Dense, 10, 3);
  EXPECT_NEAR(xd.norm(), std::sqrt(10.0), 1e-12);
  const Vec xs = make_input(Setting::Sparse, 10, 3);
  EXPECT_DOUBLE_EQ(xs.norm(), 1.0);
  EXPECT_EQ((xs.array() != 0.0).count(), 1);
  EXPECT_NEAR(make_loss(Setting::Dense, 4, 1).c.norm(), 0.5, 1e-14);
  EXPECT_NEAR(make_loss(Setting::Sparse, 4, 1).c.norm(), 1.0, 1e-14);
  const Vec xb = make_batch_input(Setting::Dense, 3, 4, 9);
  EXPECT_EQ(xb.size(), 12);
  EXPECT_THROW(make_input(Setting::Dense, 0, 1), std::invalid_argument);
  EXPECT_THROW(make_loss(Setting::Dense, 0, 1), std::invalid_argument);
}

TEST(Network, InitShapesStdsAndDeterminism) {
  const ArchSpec a = ArchSpec::mlp(30, 200, 5, 4);
  ScalingScheme s;
  s.sigma_in = 0.5, s.sigma_hid = 0.1, s.sigma_out = 2.0;
  const Model m1 = init_model(a, s, 17), m2 = init_model(a, s, 17), m3 = init_model(a, s, 18);
  ASSERT_EQ(m1.weights.size(), 4u);
  EXPECT_EQ(m1.W(1).rows(), 200);
  EXPECT_EQ(m1.W(1).cols(), 30);
  EXPECT_EQ(m1.W(4).rows(), 5);
  EXPECT_NEAR(rms_norm(m1.W(1)), 0.5, 0.02);
  EXPECT_NEAR(rms_norm(m1.W(2)), 0.1, 0.002);
  EXPECT_NEAR(rms_norm(m1.W(4)), 2.0, 0.2);
  EXPECT_TRUE(m1.W(3) == m2.W(3));
  EXPECT_FALSE(m1.W(3) == m3.W(3));
  s.sigma_hid = 0.0;
  EXPECT_THROW(init_model(a, s, 1), std::invalid_argument);
  EXPECT_THROW(init_model(a, ScalingScheme{}, 1, 1000), std::invalid_argument);
}

TEST(Network, MlpForwardByHand) {
  Model m{ArchSpec::mlp(2, 2, 1, 3), {}};
  Mat W1(2, 2), W2(2, 2), W3(1, 2);
  W1 << 1, -1, 2, 0.5;
  W2 << 1, 1, -1, 2;
  W3 << 3, -1;
  m.weights = {W1, W2, W3};
  Vec x(2);
  x << 1, 2;
  const ForwardTrace t = forward(m, x);
  // f1 = (-1, 3), g1 = (0, 3), f2 = (3, 6), g2 = (3, 6), f3 = 3.
  EXPECT_DOUBLE_EQ(t.f[1](0), -1.0);
  EXPECT_DOUBLE_EQ(t.g[1](0), 0.0);
  EXPECT_DOUBLE_EQ(t.f[2](1), 6.0);
  EXPECT_DOUBLE_EQ(t.f[3](0), 3.0);
  EXPECT_THROW(forward(m, Vec(Vec::Ones(3))), std::invalid_argument);
}

TEST(Network, ResNetForwardByHand) {
  Model m{ArchSpec::resnet(2, 2, 1, 3, 0.6, Activation::ReLU), {}};
  Mat W1 = Mat::Identity(2, 2), W2(2, 2), W3(1, 2);
  W2 << 0, 1, 1, 0;
  W3 << 1, 1;
  m.weights = {W1, W2, W3};
  Vec x(2);
  x << 1, -2;
  const ForwardTrace t = forward(m, x);
  // f1 = (1,-2); f2 = 0.8 f1 + 0.6 W2 relu(f1) = (0.8, -1.6) + 0.6 (0, 1) = (0.8, -1.0).
  EXPECT_DOUBLE_EQ(t.f[2](0), 0.8);
  EXPECT_DOUBLE_EQ(t.f[2](1), -1.0);
  EXPECT_DOUBLE_EQ(t.f[3](0), -0.2);
}

TEST(Network, LossEvaluation) {
  Vec c(2);
  c << 1, -2;
  const LossSpec lin = LossSpec::linear(c);
  Mat f(2, 2);
  f << 1, 2, 3, 4;
  const LossEval e = loss_eval(lin, f);
  EXPECT_DOUBLE_EQ(e.value, (1 - 6) + (2 - 8));
  EXPECT_TRUE(e.grad.col(1) == c);
  Vec y(2);
  y << 1, 1;
  const LossEval r = loss_eval(LossSpec::rms(y), f);
  EXPECT_DOUBLE_EQ(r.value, (0 + 4 + 1 + 9) / 4.0);
  EXPECT_THROW(loss_eval(lin, Mat(Mat::Zero(3, 1))), std::invalid_argument);
  EXPECT_DOUBLE_EQ(loss_hessian_form(lin, f, f), 0.0);
}
