#include "featspeed/scalings.hpp"
#include "featspeed/harness/experiments.hpp"

#include <gtest/gtest.h>

using namespace featspeed;

TEST(Scalings, TableValuesDense) {
  const double d = 10, m = 400, k = 2, L = 16;
  const NamedScheme spec{SchemeName::FSC_MLP, Setting::Dense, 10, 400, 2, 16, 1.0};
  const ScalingScheme f = named_scheme(spec);
  EXPECT_DOUBLE_EQ(f.sigma_in, 1 / std::sqrt(d));
  EXPECT_DOUBLE_EQ(f.sigma_hid, std::sqrt(2 / m));
  EXPECT_DOUBLE_EQ(f.sigma_out, std::sqrt(k * L) / m);
  EXPECT_DOUBLE_EQ(f.eta_in, m / (L * L * d));
  EXPECT_DOUBLE_EQ(f.eta_hid, 1 / (L * L));
  EXPECT_DOUBLE_EQ(f.eta_out, k / (L * m));
  EXPECT_EQ(f.lr_mode, LrMode::Fixed);

  NamedScheme s = spec;
  s.name = SchemeName::NTK;
  const ScalingScheme n = named_scheme(s);
  EXPECT_DOUBLE_EQ(n.sigma_out, 1 / std::sqrt(m));
  EXPECT_DOUBLE_EQ(n.eta_in, 1 / (L * d));
  EXPECT_DOUBLE_EQ(n.eta_hid, 1 / (L * m));
  EXPECT_DOUBLE_EQ(n.eta_out, k / (L * m));

  s.name = SchemeName::MFmuP;
  const ScalingScheme mf = named_scheme(s);
  EXPECT_DOUBLE_EQ(mf.sigma_out, std::sqrt(k) / m);
  EXPECT_DOUBLE_EQ(mf.eta_in, m / (L * std::sqrt(L) * d));
  EXPECT_DOUBLE_EQ(mf.eta_hid, 1 / (L * std::sqrt(L)));
  EXPECT_DOUBLE_EQ(mf.eta_out, k / (L * std::sqrt(L) * m));

  s.name = SchemeName::FSC_ResNet;
  s.beta = 0.25;
  const ScalingScheme r = named_scheme(s);
  EXPECT_DOUBLE_EQ(r.sigma_hid, 1 / std::sqrt(m));
  EXPECT_DOUBLE_EQ(r.sigma_out, std::sqrt(k) / m);
  EXPECT_DOUBLE_EQ(r.eta_in, m / (L * d));
  EXPECT_DOUBLE_EQ(r.eta_hid, 1 / (0.0625 * L));
  EXPECT_DOUBLE_EQ(r.eta_out, k / (L * m));
  s.beta = 0.0;
  EXPECT_THROW(named_scheme(s), std::invalid_argument);
}

TEST(Scalings, SparseSettingReplacesDimensionsByOne) {
  const ScalingScheme f = named_scheme({SchemeName::FSC_MLP, Setting::Sparse, 10, 400, 2, 16, 1.0});
  EXPECT_DOUBLE_EQ(f.sigma_in, 1.0);
  EXPECT_DOUBLE_EQ(f.sigma_out, std::sqrt(16.0) / 400);
  EXPECT_DOUBLE_EQ(f.eta_in, 400 / 256.0);
  EXPECT_DOUBLE_EQ(f.eta_out, 1 / (16.0 * 400));
}

TEST(Scalings, SchemeNamesRoundTrip) {
  for (SchemeName n : {SchemeName::NTK, SchemeName::MFmuP, SchemeName::FSC_MLP, SchemeName::FSC_ResNet})
    EXPECT_EQ(parse_scheme_name(to_string(n)), n);
  EXPECT_THROW(parse_scheme_name("SP"), std::invalid_argument);
  EXPECT_THROW(named_scheme({SchemeName::NTK, Setting::Dense, 10, 0, 1, 4, 1.0}), std::invalid_argument);
}

TEST(Scalings, FscProductConstraint) {
  // Forward gain per hidden ReLU layer is σ_hid·√(m/2); end blocks contribute σ_in·√d and σ_out·m/√k.
  for (std::size_t L : {4u, 16u, 64u})
    for (std::size_t m : {64u, 512u}) {
      const ScalingScheme s = named_scheme({SchemeName::FSC_MLP, Setting::Dense, 10, m, 2, L, 1.0});
      const double gain = s.sigma_in * std::sqrt(10.0) * std::pow(s.sigma_hid * std::sqrt(m / 2.0), double(L - 2)) *
                          s.sigma_out * double(m) / std::sqrt(2.0);
      EXPECT_NEAR(gain, std::sqrt(double(L)), 1e-9 * std::sqrt(double(L)));
    }
}

TEST(Scalings, AutoscaleLandsNearTableValues) {
  const ArchSpec a = ArchSpec::mlp(10, 256, 1, 8);
  const ScalingScheme table = named_scheme(SchemeName::FSC_MLP, a);
  const FscAutoscaleResult r = fsc_autoscale(a, Setting::Dense, 3);
  EXPECT_EQ(r.scheme.lr_mode, LrMode::ScaleInvariantQuadratic);
  for (auto [got, want] : {std::pair{r.scheme.sigma_in, table.sigma_in}, std::pair{r.scheme.sigma_hid, table.sigma_hid},
                           std::pair{r.scheme.sigma_out, table.sigma_out}}) {
    EXPECT_LT(got / want, 3.0);
    EXPECT_GT(got / want, 1.0 / 3.0);
  }
  EXPECT_GE(r.fl_target, 0.5);
  EXPECT_LE(r.fl_target, 2.0);
}

TEST(Scalings, AutoscaleFailsLoudlyOnPathologicalStart) {
  const ArchSpec a = ArchSpec::mlp(10, 64, 1, 6);
  EXPECT_THROW(fsc_autoscale(a, Setting::Dense, 3, 1e-3, 0.3, 1e-300, 0.1), std::runtime_error);
  EXPECT_THROW(fsc_autoscale(a, Setting::Dense, 3, 0.0), std::invalid_argument);
}

TEST(Scalings, ZeroOutputInitFirstStep) {
  const ArchSpec a = ArchSpec::mlp(10, 64, 1, 8);
  const ZeroOutputInit z = zero_output_init(a, Setting::Dense, 5);
  EXPECT_TRUE(z.model.W(a.L).isZero(0.0));
  EXPECT_NEAR(z.eta_L0, std::sqrt(8.0) / (64.0 * 1.0), 1e-15);  // ‖b_L‖² = 1/k = 1
  const auto o = harness::run_zero_init_case(a, Setting::Dense, 5);
  EXPECT_EQ(o.max_hidden_grad, 0.0);
  EXPECT_LT(o.output_residual, 1e-12);
  EXPECT_THROW(zero_output_init(ArchSpec::resnet(10, 64, 1, 8, 0.3), Setting::Dense, 1), std::invalid_argument);
}

TEST(Scalings, RescalingInvarianceAndControl) {
  const auto t = harness::run_invariance_trial(9);
  EXPECT_LT(t.rescale_si, 1e-8);
  EXPECT_GT(t.rescale_fixed, 1e-2);
  EXPECT_LT(t.reparam_quadratic, 1e-10);
  EXPECT_GT(t.reparam_constant, 1e-3);
}

TEST(Scalings, RescalingRejectsBadFactors) {
  const ArchSpec a = ArchSpec::mlp(3, 4, 2, 3);
  const Model model = init_model(a, named_scheme(SchemeName::NTK, a), 1);
  const Mat x = as_batch(make_input(Setting::Dense, 3, 2), 3);
  const LossSpec loss = make_loss(Setting::Dense, 2, 3);
  ScalingScheme s;
  EXPECT_THROW(rescaling_invariance(model, loss, x, {2.0, 1.0, 1.0}, 1, 0.1, s), std::invalid_argument);
  EXPECT_THROW(rescaling_invariance(model, loss, x, {2.0, -0.5, -1.0}, 1, 0.1, s), std::invalid_argument);
  EXPECT_THROW(rescaling_invariance(model, loss, x, {1.0, 1.0}, 1, 0.1, s), std::invalid_argument);
  const auto f = network_objective(a, loss, x);
  EXPECT_THROW(reparam_invariance(f, model.weights, {1.0, 0.0, 1.0}, constant_lr_rule(1.0)), std::invalid_argument);
}

TEST(Scalings, PropertySweepIsWorkerIndependent) {
  PropertySweepConfig c;
  c.scheme_name = "FSC_MLP";
  c.scheme = [](const ArchSpec& a) { return named_scheme(SchemeName::FSC_MLP, a); };
  c.family = SweepFamily::VaryL;
  c.grid = {4, 6, 8};
  c.fixed_m = 32;
  c.seeds = 3;
  c.base_seed = 4;
  c.workers = 1;
  const PropertyReport a = property_sweep(c);
  c.workers = 3;
  const PropertyReport b = property_sweep(c);
  ASSERT_EQ(a.rows.size(), 9u);
  for (std::size_t i = 0; i < a.rows.size(); ++i) EXPECT_EQ(a.rows[i].values, b.rows[i].values);
  EXPECT_EQ(a.summary.size(), 7u);
  EXPECT_NO_THROW(a.at(Property::LD));
  EXPECT_NO_THROW(a.fit("loss_decay"));
  c.grid = {4, 8};
  EXPECT_THROW(property_sweep(c), std::invalid_argument);
}

TEST(Scalings, PropertyPassRequiresAllQuantities) {
  // An NTK width sweep must flag FL (feature speed decays like m^{-1/2}).
  PropertySweepConfig c;
  c.scheme_name = "NTK";
  c.scheme = [](const ArchSpec& a) { return named_scheme(SchemeName::NTK, a); };
  c.family = SweepFamily::VaryM;
  c.grid = {64, 128, 256, 512};
  c.fixed_L = 4;
  c.seeds = 3;
  c.base_seed = 2;
  const PropertyReport r = property_sweep(c);
  EXPECT_FALSE(r.at(Property::FL).pass);
  EXPECT_NEAR(r.fit("f_dot_rms").exponent, -0.5, 0.15);
  EXPECT_TRUE(r.at(Property::SP).pass);
}
