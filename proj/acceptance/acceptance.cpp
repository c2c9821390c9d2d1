// Acceptance suite: one PASS/FAIL line per criterion. The base seed is fixed
// before any run; every stochastic quantity derives from it.
#include "featspeed/featspeed.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

using namespace featspeed;
using namespace featspeed::harness;

namespace {

constexpr std::uint64_t kBaseSeed = 1;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  std::function<Outcome(std::size_t workers)> run;
};

std::string fmt(double x, int prec = 4) {
  std::ostringstream os;
  os.precision(prec);
  os << x;
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

bool within(double x, double target, double tol) { return std::isfinite(x) && std::abs(x - target) <= tol; }

// --- 1 -----------------------------------------------------------------------
Outcome feature_speed_identity(std::size_t workers) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t n = 64;
  const auto out = parallel_map<IdentityOutcome>(n, workers, [](std::size_t i) {
    return run_identity_case(derive_seed(kBaseSeed, {1, i}));
  });
  double worst = 0.0;
  std::set<std::string> kinds;
  for (const auto& o : out) {
    worst = std::max(worst, o.max_feature_residual);
    kinds.insert(std::string(to_string(o.c.arch.kind)) + "/" + std::string(to_string(o.c.arch.activation)) + "/" +
                 std::string(to_string(o.c.setting)));
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-10 && secs < 60.0 && kinds.size() == 8,
          std::to_string(n) + " configs covering " + std::to_string(kinds.size()) + "/8 families, max residual " +
              fmt(worst) + ", " + fmt(secs, 3) + " s"};
}

// --- 2 -----------------------------------------------------------------------
std::vector<Mat> relu_pattern(const ForwardTrace& t, std::size_t L) {
  std::vector<Mat> p;
  for (std::size_t ell = 1; ell < L; ++ell) p.push_back((t.f[ell].array() > 0.0).cast<double>().matrix());
  return p;
}

// f_v is affine in any single weight entry while the activation pattern is
// fixed, so a central difference with an unchanged pattern is exact up to rounding.
Mat brute_force_bfk(const Model& model, const Mat& x, const ResolvedLRs& lrs, std::size_t v) {
  const ForwardTrace t = forward(model, x);
  const auto pattern = relu_pattern(t, model.arch.L);
  const Eigen::Index rows = t.f[v].size();
  Mat K = Mat::Zero(rows, rows);
  for (std::size_t ell = 1; ell <= v; ++ell) {
    Mat J(rows, model.W(ell).size());
    for (Eigen::Index i = 0; i < model.W(ell).size(); ++i) {
      for (double h = 1e-3;; h *= 0.1) {
        Model mp = model, mm = model;
        mp.W(ell).data()[i] += h;
        mm.W(ell).data()[i] -= h;
        const ForwardTrace tp = forward(mp, x), tm = forward(mm, x);
        if ((relu_pattern(tp, model.arch.L) != pattern || relu_pattern(tm, model.arch.L) != pattern) && h > 1e-9)
          continue;
        J.col(i) = flat(Mat((tp.f[v] - tm.f[v]) / (2.0 * h)));
        break;
      }
    }
    K += lrs.at(ell) * J * J.transpose();
  }
  return K;
}

Outcome bfk_oracle(std::size_t) {
  double worst = 0.0;
  for (bool resnet : {false, true})
    for (Activation act : {Activation::ReLU, Activation::Linear}) {
      const ArchSpec a = resnet ? ArchSpec::resnet(3, 4, 2, 3, 0.6, act) : ArchSpec::mlp(3, 4, 2, 3, act);
      const std::uint64_t seed = derive_seed(kBaseSeed, {2, resnet, act == Activation::ReLU});
      const Model model = init_model_with_stds(a, 0.6, 0.5, 0.5, seed);
      const Mat x = as_batch(make_input(Setting::Dense, 3, derive_seed(seed, {1})), 3);
      const ResolvedLRs lrs{{0.7, 1.3, 0.4}};
      const ForwardTrace t = forward(model, x);
      for (std::size_t v = 1; v <= 3; ++v) {
        const Mat Kb = brute_force_bfk(model, x, lrs, v);
        worst = std::max(worst, (assemble_bfk(model, t, lrs, v) - Kb).norm() / Kb.norm());
      }
    }
  return {worst < 1e-8, "max relative Frobenius error " + fmt(worst) + " over MLP/ResNet x ReLU/Linear, v=1..3"};
}

// --- 3 -----------------------------------------------------------------------
Outcome gradient_check(std::size_t) {
  double worst_lin = 0.0, worst_relu = 0.0;
  std::size_t skipped = 0, checked = 0;
  int idx = 0;
  for (bool resnet : {false, true})
    for (Activation act : {Activation::Linear, Activation::ReLU})
      for (bool rms : {false, true}) {
        const ArchSpec a = resnet ? ArchSpec::resnet(3, 5, 2, 4, 0.5, act, 2) : ArchSpec::mlp(3, 5, 2, 4, act, 2);
        const std::uint64_t seed = derive_seed(kBaseSeed, {3, std::uint64_t(idx++)});
        const Model model = init_model_with_stds(a, 0.6, 0.5, 0.5, seed);
        const Mat x = as_batch(make_batch_input(Setting::Dense, 3, 2, derive_seed(seed, {1})), 3);
        const LossSpec loss =
            rms ? LossSpec::rms(gaussian_vector(2, 1.0, derive_seed(seed, {2}))) : make_loss(Setting::Dense, 2, seed);
        const ForwardTrace t = forward(model, x, loss);
        const BackwardTrace bt = backward(model, t, loss);
        const auto pattern = relu_pattern(t, a.L);
        const double h = act == Activation::Linear ? 1e-4 : 1e-6;
        for (std::size_t ell = 1; ell <= a.L; ++ell) {
          Mat fd = Mat::Zero(model.W(ell).rows(), model.W(ell).cols());
          Mat keep = Mat::Ones(fd.rows(), fd.cols());
          for (Eigen::Index i = 0; i < fd.size(); ++i) {
            Model mp = model, mm = model;
            mp.W(ell).data()[i] += h;
            mm.W(ell).data()[i] -= h;
            const ForwardTrace tp = forward(mp, x, loss), tm = forward(mm, x, loss);
            if (relu_pattern(tp, a.L) != pattern || relu_pattern(tm, a.L) != pattern) {
              keep.data()[i] = 0.0;
              ++skipped;
              continue;
            }
            ++checked;
            fd.data()[i] = (tp.loss_value - tm.loss_value) / (2.0 * h);
          }
          const Mat an = bt.grad(ell).cwiseProduct(keep);
          const double err = (an - fd).norm() / std::max(an.norm(), 1e-300);
          (act == Activation::Linear ? worst_lin : worst_relu) = std::max(act == Activation::Linear ? worst_lin : worst_relu, err);
        }
      }
  return {worst_lin < 1e-6 && worst_relu < 1e-6,
          "linear nets " + fmt(worst_lin) + ", ReLU nets " + fmt(worst_relu) + " (" + std::to_string(skipped) + " of " +
              std::to_string(checked + skipped) + " entries guarded)"};
}

// --- 4, 5 --------------------------------------------------------------------
PowerLawFit output_angle_fit(const std::function<ArchSpec(std::size_t)>& arch_of, std::uint64_t tag, std::size_t workers,
                             std::vector<double>* medians) {
  const std::vector<std::size_t> Ls{8, 16, 32, 64, 128};
  const std::size_t S = 5;
  const auto out = parallel_map<double>(Ls.size() * S, workers, [&](std::size_t i) {
    const ArchSpec a = arch_of(Ls[i / S]);
    return bfa_sample(a, bfa_scheme(a, false), Setting::Dense, derive_seed(kBaseSeed, {tag, Ls[i / S], i % S}))
        .cos_exact[a.L - 2];
  });
  std::vector<double> xs;
  std::vector<std::vector<double>> ys;
  for (std::size_t li = 0; li < Ls.size(); ++li) {
    xs.push_back(double(Ls[li]));
    ys.emplace_back(out.begin() + long(li * S), out.begin() + long((li + 1) * S));
  }
  return fit_medians(xs, ys, medians);
}

std::string list(const std::vector<double>& v) {
  std::string s;
  for (double x : v) s += (s.empty() ? "" : ", ") + fmt(x, 3);
  return "[" + s + "]";
}

Outcome mlp_bfa_exponent(std::size_t workers) {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<double> med;
  const PowerLawFit f = output_angle_fit([](std::size_t L) { return ArchSpec::mlp(10, 200, 1, L); }, 4, workers, &med);
  const double secs = seconds_since(t0);
  return {within(f.exponent, -0.5, 0.15) && secs < 300.0,
          "exponent " + fmt(f.exponent) + " (target -0.5 +/- 0.15), median cos " + list(med) + ", " + fmt(secs, 3) + " s"};
}

Outcome resnet_bfa_flat(std::size_t workers) {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<double> med;
  const PowerLawFit f = output_angle_fit(
      [](std::size_t L) { return ArchSpec::resnet(10, 200, 1, L, 1.0 / std::sqrt(double(L)), Activation::Linear); }, 5,
      workers, &med);
  const double secs = seconds_since(t0);
  return {within(f.exponent, 0.0, 0.1) && secs < 300.0,
          "exponent " + fmt(f.exponent) + " (target 0 +/- 0.1), median cos " + list(med) + ", " + fmt(secs, 3) + " s"};
}

// --- 6 -----------------------------------------------------------------------
Outcome spectral_prediction(std::size_t workers) {
  struct R {
    double cos, pred, ratio;
  };
  const std::size_t S = 5, L = 32;
  const auto out = parallel_map<R>(S, workers, [&](std::size_t s) {
    const ArchSpec a = ArchSpec::mlp(10, 400, 1, L);
    const ScalingScheme sch = bfa_scheme(a, false);
    const std::uint64_t seed = derive_seed(kBaseSeed, {6, s});
    const Model model = init_model(a, sch, derive_seed(seed, {3}));
    const Mat x = as_batch(make_input(Setting::Dense, a.d, derive_seed(seed, {1})), a.d);
    const LossSpec loss = make_loss(Setting::Dense, a.k, derive_seed(seed, {2}));
    const ForwardTrace t = forward(model, x, loss);
    const BackwardTrace bt = backward(model, t, loss);
    const ResolvedLRs lrs = resolve_lrs(sch, bt, L);
    const double c = layer_diagnostics(model, loss, t, bt, lrs, L - 1).cos_theta;
    const SpectralMoments sm = spectral_moments(assemble_bfk(model, t, lrs, L - 1));
    return R{c, sm.predicted_cos(), sm.lambda_min / sm.lambda_max};
  });
  std::vector<double> rel, cs, ps;
  bool bound = true;
  for (const auto& r : out) {
    rel.push_back(std::abs(r.cos - r.pred) / r.cos);
    cs.push_back(r.cos);
    ps.push_back(r.pred);
    bound = bound && r.ratio <= r.cos;
  }
  const double med_rel = median(rel);
  const double rel_of_medians = std::abs(median(cs) - median(ps)) / median(cs);
  return {med_rel < 0.05 && bound, "median relative error " + fmt(med_rel) + " (target < 0.05; per seed " + list(rel) +
                                       "; error of medians " + fmt(rel_of_medians) + "), bound lmin/lmax <= cos " +
                                       (bound ? "held" : "VIOLATED") + " in all runs"};
}

// --- 7 -----------------------------------------------------------------------
Outcome trace_estimation(std::size_t) {
  const std::size_t n = 100000;
  std::string detail;
  bool ok = true;
  const Mat D = Vec((Vec(3) << 1, 2, 3).finished()).asDiagonal();
  const Mat G = gaussian_matrix(64, 64, 1.0, derive_seed(kBaseSeed, {7, 0}));
  const Mat P = G * G.transpose() / 64.0;
  for (const auto& [label, K] : {std::pair<std::string, Mat>{"diag(1,2,3)", D}, std::pair<std::string, Mat>{"PSD 64x64", P}}) {
    const SpectralMoments sm = spectral_moments(K);
    const double m = double(K.rows());
    const double var = 2.0 / m * sm.m4;
    const auto h = hutchinson_check(K, n, derive_seed(kBaseSeed, {7, std::uint64_t(K.rows())}));
    const double z = std::abs(h.mean - sm.m2) / std::sqrt(var / double(n));
    const double vr = h.variance / var - 1.0;
    ok = ok && z < 5.0 && std::abs(vr) < 0.25;
    detail += label + ": mean off by " + fmt(z, 3) + " SE, variance off by " + fmt(100 * vr, 3) + "%; ";
  }
  return {ok, detail};
}

// --- 8 -----------------------------------------------------------------------
Outcome property_matrix(std::size_t workers) {
  const auto t0 = std::chrono::steady_clock::now();
  AuditSettings st;  // ReLU MLP, d=10, k=1, m-grid {64..512} at L=4, L-grid {8..64} at m=1024
  std::vector<SchemeAudit> audits;
  for (SchemeName nm : {SchemeName::NTK, SchemeName::MFmuP, SchemeName::FSC_MLP})
    audits.push_back(audit_scheme(std::string(to_string(nm)), [nm](const ArchSpec& a) { return named_scheme(nm, a); },
                                  st, Setting::Dense, 5, derive_seed(kBaseSeed, {8}), workers));
  const auto expected = table1_expectations();
  bool ok = true;
  std::string detail;
  for (std::size_t i = 0; i < audits.size(); ++i) {
    const auto& au = audits[i];
    detail += au.scheme + ":";
    for (Property p : {Property::SP, Property::BC, Property::LD, Property::FL}) {
      const bool got = au.pass(p), want = expected[i].expect.at(p);
      ok = ok && got == want;
      const auto& sm = au.vary_m.at(p);
      const auto& sl = au.vary_L.at(p);
      detail += " " + std::string(to_string(p)) + (got ? "+" : "-") + (got == want ? "" : "(!)") + "[m " + fmt(sm.exponent, 2) +
                ", L " + fmt(sl.exponent, 2) + "]";
    }
    detail += "; ";
  }
  const double ntk_fl = audits[0].vary_m.fit("f_dot_rms").exponent;
  const double mf_ld = audits[1].vary_L.fit("loss_decay").exponent;
  ok = ok && within(ntk_fl, -0.5, 0.15) && within(mf_ld, -0.5, 0.15);
  const double secs = seconds_since(t0);
  ok = ok && secs < 600.0;
  detail += "NTK FL exponent in m " + fmt(ntk_fl) + ", MF+muP LD exponent in L " + fmt(mf_ld) + ", " + fmt(secs, 3) + " s";
  return {ok, detail};
}

// --- 9 -----------------------------------------------------------------------
Outcome sensitivity_trends(std::size_t workers) {
  const std::vector<std::size_t> Ls{8, 16, 32, 64, 128}, ms{64, 128, 256, 512};
  const std::size_t S = 5;
  auto fit = [&](SchemeName nm, bool vary_m) {
    const auto& grid = vary_m ? ms : Ls;
    const auto out = parallel_map<double>(grid.size() * S, workers, [&](std::size_t i) {
      const std::size_t g = grid[i / S];
      const ArchSpec a = vary_m ? ArchSpec::mlp(4, g, 2, 8, Activation::ReLU, 32) : ArchSpec::mlp(4, 400, 2, g, Activation::ReLU, 32);
      return sensitivity_sample(a, named_scheme(nm, a), Setting::Dense,
                                derive_seed(kBaseSeed, {9, std::uint64_t(nm), vary_m, g, i % S}), 1e-2);
    });
    std::vector<double> xs;
    std::vector<std::vector<double>> ys;
    for (std::size_t gi = 0; gi < grid.size(); ++gi) {
      xs.push_back(double(grid[gi]));
      ys.emplace_back(out.begin() + long(gi * S), out.begin() + long((gi + 1) * S));
    }
    return fit_medians(xs, ys).exponent;
  };
  const double ntk_m = fit(SchemeName::NTK, true), mf_L = fit(SchemeName::MFmuP, false), fsc_L = fit(SchemeName::FSC_MLP, false);
  return {within(ntk_m, -0.5, 0.15) && within(mf_L, 0.5, 0.15) && within(fsc_L, 0.0, 0.15),
          "NTK in m " + fmt(ntk_m) + " (-0.5), MF+muP in L " + fmt(mf_L) + " (+0.5), FSC in L " + fmt(fsc_L) +
              " (0); tolerance 0.15"};
}

// --- 10, 11 ------------------------------------------------------------------
Outcome rescaling(std::size_t workers) {
  const auto out = parallel_map<InvarianceTrial>(5, workers, [](std::size_t i) {
    return run_invariance_trial(derive_seed(kBaseSeed, {10, i}));
  });
  double worst = 0.0, control = INFINITY;
  for (const auto& o : out) worst = std::max(worst, o.rescale_si), control = std::min(control, o.rescale_fixed);
  return {worst < 1e-8 && control > 1e-2,
          "max deviation " + fmt(worst) + " over 10 steps (5 trials), fixed-LR control min deviation " + fmt(control)};
}

Outcome reparam(std::size_t workers) {
  const auto out = parallel_map<InvarianceTrial>(5, workers, [](std::size_t i) {
    return run_invariance_trial(derive_seed(kBaseSeed, {11, i}));
  });
  double worst = 0.0, control = INFINITY;
  for (const auto& o : out) worst = std::max(worst, o.reparam_quadratic), control = std::min(control, o.reparam_constant);
  return {worst < 1e-10 && control > 1e-3,
          "max one-step deviation " + fmt(worst) + ", constant-LR control min deviation " + fmt(control)};
}

// --- 12 ----------------------------------------------------------------------
Outcome backward_identity_and_fbk(std::size_t workers) {
  const std::size_t L = 64, m = 400, S = 5;
  struct R {
    double residual = 0.0;
    std::vector<double> cos_tilde;
  };
  const auto out = parallel_map<R>(S, workers, [&](std::size_t s) {
    const ArchSpec a = ArchSpec::mlp(10, m, 1, L);
    const ScalingScheme sch = bfa_scheme(a, true);
    const std::uint64_t seed = derive_seed(kBaseSeed, {12, s});
    const Model model = init_model(a, sch, derive_seed(seed, {3}));
    const Mat x = as_batch(make_input(Setting::Dense, a.d, derive_seed(seed, {1})), a.d);
    const LossSpec loss = make_loss(Setting::Dense, a.k, derive_seed(seed, {2}));
    const ForwardTrace t = forward(model, x, loss);
    const BackwardTrace bt = backward(model, t, loss);
    const ResolvedLRs lrs = resolve_lrs(sch, bt, L);
    R r;
    for (const auto& d : all_layer_diagnostics(model, loss, t, bt, lrs)) {
      r.residual = std::max(r.residual, d.backward_speed_residual);
      if (d.v < L) r.cos_tilde.push_back(d.cos_theta_tilde);
    }
    return r;
  });
  double residual = 0.0;
  for (const auto& r : out) residual = std::max(residual, r.residual);
  // Random identity configurations with linear losses on MLPs, all widths.
  for (std::size_t i = 0; i < 64; ++i) {
    const auto o = run_identity_case(derive_seed(kBaseSeed, {12, 1000 + i}));
    if (o.c.arch.kind == ArchKind::MLP && o.c.loss == LossKind::LinearLoss) residual = std::max(residual, o.max_backward_residual);
  }
  std::vector<double> xs;
  std::vector<std::vector<double>> ys;
  for (std::size_t v = 1; v < L; ++v) {
    xs.push_back(double(L - v));
    std::vector<double> c;
    for (const auto& r : out) c.push_back(r.cos_tilde[v - 1]);
    ys.push_back(c);
  }
  const PowerLawFit f = fit_medians(xs, ys);
  return {residual < 1e-10 && within(f.exponent, -0.5, 0.2),
          "max backward residual " + fmt(residual) + ", cos(theta~_v) exponent in (L-v) " + fmt(f.exponent) +
              " (target -0.5 +/- 0.2, r2 " + fmt(f.r_squared, 3) + ")"};
}

// --- 13 ----------------------------------------------------------------------
Outcome zero_output(std::size_t workers) {
  const std::vector<std::size_t> Ls{16, 32, 64, 128};
  const std::size_t S = 5;
  const auto out = parallel_map<ZeroInitOutcome>(Ls.size() * S, workers, [&](std::size_t i) {
    return run_zero_init_case(ArchSpec::mlp(10, 400, 1, Ls[i / S]), Setting::Dense,
                              derive_seed(kBaseSeed, {13, Ls[i / S], i % S}));
  });
  std::vector<double> med;
  double resid = 0.0;
  for (std::size_t li = 0; li < Ls.size(); ++li) {
    std::vector<double> v;
    for (std::size_t s = 0; s < S; ++s) {
      v.push_back(out[li * S + s].ratio);
      resid = std::max(resid, out[li * S + s].output_residual);
    }
    med.push_back(median(v));
  }
  const double band = *std::max_element(med.begin(), med.end()) / *std::min_element(med.begin(), med.end());
  return {band <= 4.0 && resid < 1e-12,
          "median ratios " + list(med) + " over L=16..128, max/min " + fmt(band) + " (band 4), f_L(1) residual " + fmt(resid)};
}

// --- 14 ----------------------------------------------------------------------
std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism(std::size_t) {
  const auto root = std::filesystem::temp_directory_path() / "featspeed_acceptance_determinism";
  std::filesystem::remove_all(root);
  std::vector<ExperimentConfig> cfgs(3);
  cfgs[0].experiment = "identity_suite";
  cfgs[1].experiment = "fig1b";
  cfgs[1].m = 64;
  cfgs[1].grid_L = {8, 16, 32};
  cfgs[2].experiment = "fig2a";
  cfgs[2].m = 64;
  cfgs[2].L = 6;
  cfgs[2].grid_L = {4, 8, 16};
  cfgs[2].grid_m = {16, 32, 64};
  cfgs[2].seeds = 3;
  std::size_t compared = 0;
  for (auto& c : cfgs) {
    c.seed = kBaseSeed;
    std::vector<std::vector<std::string>> contents;
    for (std::size_t w : {1u, 2u, 5u}) {
      c.workers = w;
      c.out = (root / (c.experiment + "_w" + std::to_string(w))).string();
      std::vector<std::string> files;
      for (const auto& f : run(c).files) files.push_back(f.filename().string() + "\n" + strip_timestamp(slurp(f)));
      contents.push_back(files);
    }
    if (contents[0] != contents[1] || contents[0] != contents[2]) return {false, c.experiment + " output differs across worker counts"};
    compared += contents[0].size();
  }
  return {true, std::to_string(compared) + " CSV files byte-identical (modulo timestamp) for workers 1, 2, 5"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::size_t workers = 1;
  std::vector<int> only;
  app.add_option("--workers", workers, "worker threads (0 = all cores)");
  app.add_option("--only", only, "run only these criterion numbers")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> criteria{
      {1, "feature speed identity", feature_speed_identity},
      {2, "BFK oracle equivalence", bfk_oracle},
      {3, "gradient correctness", gradient_check},
      {4, "MLP output angle exponent", mlp_bfa_exponent},
      {5, "ResNet output angle flatness", resnet_bfa_flat},
      {6, "spectral prediction", spectral_prediction},
      {7, "trace estimation", trace_estimation},
      {8, "scheme property matrix", property_matrix},
      {9, "sensitivity trends", sensitivity_trends},
      {10, "blockwise rescaling invariance", rescaling},
      {11, "reparameterization invariance", reparam},
      {12, "backward speed identity and FBK exponent", backward_identity_and_fbk},
      {13, "zero-output initialization", zero_output},
      {14, "determinism", determinism},
  };
  int failed = 0, ran = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run(workers);
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    ++ran;
    failed += o.pass ? 0 : 1;
    std::printf("[%s] %2d %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", c.id, c.name.c_str(), o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  }
  std::printf("%d/%d criteria passed\n", ran - failed, ran);
  return failed == 0 ? 0 : 1;
}
