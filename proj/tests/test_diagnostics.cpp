#include "featspeed/diagnostics.hpp"
#include "featspeed/harness/experiments.hpp"

#include <gtest/gtest.h>

using namespace featspeed;

namespace {

struct NetCase {
  Model model;
  Mat x;
  LossSpec loss;
  ForwardTrace t;
  BackwardTrace bt;
  ResolvedLRs lrs;
};

NetCase make_setup(const ArchSpec& a, std::uint64_t seed, bool train_input = true) {
  NetCase s;
  s.model = init_model_with_stds(a, 1.0 / std::sqrt(double(a.d)), std::sqrt(2.0 / double(a.m)),
                                 1.0 / std::sqrt(double(a.m)), seed);
  s.x = as_batch(make_batch_input(Setting::Dense, a.d, a.batch, seed + 1), a.d);
  s.loss = make_loss(Setting::Dense, a.k, seed + 2);
  s.t = forward(s.model, s.x, s.loss);
  s.bt = backward(s.model, s.t, s.loss);
  s.lrs.eta.clear();
  for (std::size_t ell = 1; ell <= a.L; ++ell) s.lrs.eta.push_back(ell == 1 && !train_input ? 0.0 : 0.3 + 0.1 * ell);
  return s;
}

// K_v from finite-difference Jacobians of f_v with respect to each weight entry.
// f_v is affine in any single entry, so wide central differences are exact up
// to rounding (for ReLU as long as the pattern does not change, checked below).
Mat brute_force_bfk(const NetCase& s, std::size_t v, double h) {
  const std::size_t rows = static_cast<std::size_t>(s.t.f[v].size());
  Mat K = Mat::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(rows));
  for (std::size_t ell = 1; ell <= v; ++ell) {
    const Mat& W = s.model.W(ell);
    Mat J(static_cast<Eigen::Index>(rows), W.size());
    for (Eigen::Index i = 0; i < W.size(); ++i) {
      Model mp = s.model, mm = s.model;
      mp.W(ell).data()[i] += h;
      mm.W(ell).data()[i] -= h;
      const Mat fp = forward(mp, s.x).f[v], fm = forward(mm, s.x).f[v];
      J.col(i) = flat(Mat((fp - fm) / (2.0 * h)));
    }
    K += s.lrs.at(ell) * J * J.transpose();
  }
  return K;
}

}  // namespace

TEST(Diagnostics, BfkMatchesBruteForceJacobians) {
  for (bool resnet : {false, true})
    for (Activation act : {Activation::Linear, Activation::ReLU})
      for (std::size_t batch : {1u, 2u}) {
        const ArchSpec a = resnet ? ArchSpec::resnet(3, 4, 2, 3, 0.6, act, batch) : ArchSpec::mlp(3, 4, 2, 3, act, batch);
        const NetCase s = make_setup(a, 41);
        const double h = act == Activation::Linear ? 1e-2 : 1e-7;
        for (std::size_t v = 1; v <= a.L; ++v) {
          const Mat K = assemble_bfk(s.model, s.t, s.lrs, v);
          const Mat Kb = brute_force_bfk(s, v, h);
          EXPECT_LT((K - Kb).norm() / Kb.norm(), act == Activation::Linear ? 1e-8 : 1e-6)
              << "resnet=" << resnet << " v=" << v << " n=" << batch;
        }
      }
}

TEST(Diagnostics, FeatureVelocityIsMinusKernelTimesBackward) {
  for (bool resnet : {false, true}) {
    const ArchSpec a = resnet ? ArchSpec::resnet(4, 6, 2, 5, 0.5, Activation::ReLU, 3) : ArchSpec::mlp(4, 6, 2, 5,
                                                                                                         Activation::ReLU, 3);
    const NetCase s = make_setup(a, 8);
    const Velocities vel = velocities(s.model, s.loss, s.t, s.bt, s.lrs);
    for (std::size_t v = 1; v <= a.L; ++v) {
      const Vec pred = -assemble_bfk(s.model, s.t, s.lrs, v) * flat(s.bt.b[v]);
      const Vec got = flat(vel.f_dot[v]);
      EXPECT_LT((pred - got).norm(), 1e-11 * (1.0 + got.norm())) << "v=" << v;
    }
  }
}

TEST(Diagnostics, ExactVelocitiesAgreeWithFiniteDifferences) {
  for (bool resnet : {false, true}) {
    const ArchSpec a = resnet ? ArchSpec::resnet(4, 8, 2, 5, 0.5, Activation::Linear) : ArchSpec::mlp(4, 8, 2, 5);
    const NetCase s = make_setup(a, 12);
    const auto ex = all_layer_diagnostics(s.model, s.loss, s.t, s.bt, s.lrs, ExactMethod{});
    const auto fd = all_layer_diagnostics(s.model, s.loss, s.t, s.bt, s.lrs, FiniteDifference{1e-6});
    for (std::size_t i = 0; i < ex.size(); ++i) {
      EXPECT_NEAR(ex[i].cos_theta, fd[i].cos_theta, 1e-4);
      EXPECT_NEAR(ex[i].f_dot_rms, fd[i].f_dot_rms, 1e-4 * (1.0 + ex[i].f_dot_rms));
    }
  }
}

TEST(Diagnostics, BackwardVelocityIsMinusFbkTimesFeatures) {
  for (Activation act : {Activation::ReLU, Activation::Linear}) {
    const ArchSpec a = ArchSpec::mlp(4, 7, 3, 6, act);
    const NetCase s = make_setup(a, 21);
    const Velocities vel = velocities(s.model, s.loss, s.t, s.bt, s.lrs);
    for (std::size_t v = 1; v <= a.L; ++v) {
      const Mat Kt = assemble_fbk(s.model, s.t, s.bt, s.lrs, s.loss, v);
      const Vec pred = -Kt * s.t.f[v].col(0);
      const Vec got = vel.b_dot[v].col(0);
      EXPECT_LT((pred - got).norm(), 1e-11 * (1.0 + got.norm())) << "v=" << v;
      EXPECT_GE(sym_eigvals(Kt).back(), -1e-12 * (1.0 + Kt.norm()));  // PSD up to rounding
    }
  }
}

TEST(Diagnostics, FbkPreconditions) {
  const NetCase s = make_setup(ArchSpec::mlp(3, 4, 2, 3), 1);
  EXPECT_THROW(assemble_fbk(s.model, s.t, s.bt, s.lrs, LossSpec::rms(Vec::Ones(2)), 1), std::invalid_argument);
  EXPECT_THROW(assemble_fbk(s.model, s.t, s.bt, s.lrs, s.loss, 0), std::invalid_argument);
  const NetCase r = make_setup(ArchSpec::resnet(3, 4, 2, 3, 0.5), 1);
  EXPECT_THROW(assemble_fbk(r.model, r.t, r.bt, r.lrs, r.loss, 1), std::invalid_argument);
  const NetCase b = make_setup(ArchSpec::mlp(3, 4, 2, 3, Activation::ReLU, 2), 1);
  EXPECT_THROW(assemble_fbk(b.model, b.t, b.bt, b.lrs, b.loss, 1), std::invalid_argument);
  EXPECT_THROW(assemble_bfk(b.model, b.t, b.lrs, 2, 4), std::invalid_argument);
}

TEST(Diagnostics, FeatureAndBackwardSpeedIdentitiesHold) {
  for (std::size_t i = 0; i < 20; ++i) {
    const auto o = harness::run_identity_case(derive_seed(77, {i}));
    EXPECT_LT(o.max_feature_residual, 1e-10);
    EXPECT_LT(o.max_backward_residual, 1e-10);
  }
}

TEST(Diagnostics, UntrainedInputGivesZeroVelocityAtFirstLayer) {
  const NetCase s = make_setup(ArchSpec::mlp(3, 5, 2, 4), 4, false);
  const auto d = all_layer_diagnostics(s.model, s.loss, s.t, s.bt, s.lrs);
  EXPECT_TRUE(d[0].zero_velocity);
  EXPECT_TRUE(std::isnan(d[0].cos_theta));
  EXPECT_FALSE(d[1].zero_velocity);
  EXPECT_NEAR(d[1].S_v, d[1].f_dot_rms / d[1].contribution_below, 1e-15);
  EXPECT_THROW(layer_diagnostics(s.model, s.loss, s.t, s.bt, s.lrs, 5), std::invalid_argument);
}

TEST(Diagnostics, SpectralMomentsOfDiagonal) {
  const Mat K = Vec((Vec(3) << 1, 2, 3).finished()).asDiagonal();
  const SpectralMoments m = spectral_moments(K);
  EXPECT_NEAR(m.m1, 2.0, 1e-14);
  EXPECT_NEAR(m.m2, 14.0 / 3.0, 1e-14);
  EXPECT_NEAR(m.m4, 98.0 / 3.0, 1e-13);
  EXPECT_DOUBLE_EQ(m.lambda_min, 1.0);
  EXPECT_DOUBLE_EQ(m.lambda_max, 3.0);
  EXPECT_NEAR(m.predicted_cos(), 2.0 / std::sqrt(14.0 / 3.0), 1e-14);
  EXPECT_THROW(spectral_moments(Mat(Vec((Vec(2) << 1, -1).finished()).asDiagonal())), std::invalid_argument);
  EXPECT_TRUE(std::isnan(spectral_moments(Mat::Zero(2, 2)).predicted_cos()));
}

TEST(Diagnostics, CosineRespectsConditionNumberBound) {
  const NetCase s = make_setup(ArchSpec::mlp(4, 10, 2, 5), 31);
  const auto d = all_layer_diagnostics(s.model, s.loss, s.t, s.bt, s.lrs);
  for (std::size_t v = 2; v <= 4; ++v) {
    const SpectralMoments m = spectral_moments(assemble_bfk(s.model, s.t, s.lrs, v));
    EXPECT_LE(m.lambda_min / m.lambda_max, d[v - 1].cos_theta + 1e-12);
  }
}

TEST(Diagnostics, HutchinsonOnSmallDiagonal) {
  const Mat K = Vec((Vec(3) << 1, 2, 3).finished()).asDiagonal();
  const std::size_t n = 100000;
  const auto h = hutchinson_check(K, n, 5);
  const double m2 = 14.0 / 3.0, var = (2.0 / 3.0) * (98.0 / 3.0);
  EXPECT_LT(std::abs(h.mean - m2), 5.0 * std::sqrt(var / n));
  EXPECT_LT(std::abs(h.variance / var - 1.0), 0.25);
  EXPECT_THROW(hutchinson_check(K, 1, 5), std::invalid_argument);
  EXPECT_THROW(hutchinson_check(Mat::Zero(2, 3), 10, 5), std::invalid_argument);
}

TEST(Diagnostics, SensitivityIsFeatureStepOverLossStep) {
  const NetCase s = make_setup(ArchSpec::mlp(4, 8, 2, 4), 3);
  const double S = one_step_sensitivity(s.model, s.loss, s.t, s.bt, s.lrs, 3, 1e-3);
  const Model next = gd_step(s.model, s.bt, s.lrs, 1e-3);
  const ForwardTrace t2 = forward(next, s.x, s.loss);
  EXPECT_NEAR(S, rms_norm(Mat(t2.f[3] - s.t.f[3])) / std::abs(t2.loss_value - s.t.loss_value), 1e-12 * S);
}
