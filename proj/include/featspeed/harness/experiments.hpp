#pragma once
// Reproduction pipelines: every experiment fans out over (grid point, seed)
// tasks, stores results by task index and writes CSV files (plus optional
// SVG). Outputs depend only on the configuration and the base seed.

#include "featspeed/harness/config.hpp"
#include "featspeed/harness/csv.hpp"
#include "featspeed/harness/svg.hpp"
#include "featspeed/scalings.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace featspeed::harness {

struct RunResult {
  std::vector<std::filesystem::path> files;
  std::vector<std::string> failures;  // assertion messages; empty on success
  std::vector<std::string> notes;     // human-readable summary lines

  bool ok() const { return failures.empty(); }
};

// ---------------------------------------------------------------------------
// building blocks shared with the test suites

/// Initialization and LRs used for angle measurements: fan-in stds (He for
/// ReLU), scale-invariant quadratic LRs with base 1.
inline ScalingScheme bfa_scheme(const ArchSpec& arch, bool train_input) {
  ScalingScheme s;
  s.sigma_in = 1.0 / std::sqrt(static_cast<double>(arch.d));
  const double m = static_cast<double>(arch.m);
  s.sigma_hid = arch.activation == Activation::ReLU ? std::sqrt(2.0 / m) : 1.0 / std::sqrt(m);
  s.sigma_out = std::sqrt(static_cast<double>(arch.k)) / m;
  s.eta_in = s.eta_hid = s.eta_out = 1.0;
  s.lr_mode = LrMode::ScaleInvariantQuadratic;
  s.train_input = train_input;
  return s;
}

struct BfaSample {
  std::vector<double> cos_exact;  // index v-1
  std::vector<double> cos_fd;     // empty unless requested
};

inline BfaSample bfa_sample(const ArchSpec& arch, const ScalingScheme& scheme, Setting setting, std::uint64_t seed,
                           double fd_dt = 0.0) {
  const Model model = init_model(arch, scheme, derive_seed(seed, {3}));
  const Mat x = as_batch(make_batch_input(setting, arch.d, arch.batch, derive_seed(seed, {1})), arch.d);
  const LossSpec loss = make_loss(setting, arch.k, derive_seed(seed, {2}));
  const ForwardTrace t = forward(model, x, loss);
  const BackwardTrace bt = backward(model, t, loss);
  const ResolvedLRs lrs = resolve_lrs(scheme, bt, arch.L);
  BfaSample out;
  for (const auto& d : all_layer_diagnostics(model, loss, t, bt, lrs, ExactMethod{})) out.cos_exact.push_back(d.cos_theta);
  if (fd_dt > 0.0)
    for (const auto& d : all_layer_diagnostics(model, loss, t, bt, lrs, FiniteDifference{fd_dt}))
      out.cos_fd.push_back(d.cos_theta);
  return out;
}

/// One-step sensitivity ‖δf_{L-1}‖_rms/|δL| at initialization.
inline double sensitivity_sample(const ArchSpec& arch, const ScalingScheme& scheme, Setting setting, std::uint64_t seed,
                                 double dt) {
  const Model model = init_model(arch, scheme, derive_seed(seed, {3}));
  const Mat x = as_batch(make_batch_input(setting, arch.d, arch.batch, derive_seed(seed, {1})), arch.d);
  const LossSpec loss = make_loss(setting, arch.k, derive_seed(seed, {2}));
  const ForwardTrace t = forward(model, x, loss);
  const BackwardTrace bt = backward(model, t, loss);
  const ResolvedLRs lrs = resolve_lrs(scheme, bt, arch.L);
  return one_step_sensitivity(model, loss, t, bt, lrs, arch.L - 1, dt);
}

/// Median over seeds at each grid point followed by a log-log fit; NaN
/// exponent when any median is unusable.
inline PowerLawFit fit_medians(const std::vector<double>& xs, const std::vector<std::vector<double>>& samples,
                               std::vector<double>* medians_out = nullptr) {
  std::vector<double> med;
  bool bad = false;
  for (const auto& s : samples) {
    med.push_back(median(s));
    bad = bad || !(med.back() > 0.0) || !std::isfinite(med.back());
  }
  if (medians_out) *medians_out = med;
  if (bad || xs.size() < 3) return {NAN, NAN, NAN};
  return fit_power_law(xs, med);
}

struct IdentityCase {
  ArchSpec arch;
  Setting setting = Setting::Dense;
  LossKind loss = LossKind::LinearLoss;
  LrMode lr_mode = LrMode::Fixed;
};

/// Random configuration drawn from a keyed stream (MLP/ResNet, ReLU/Linear,
/// Dense/Sparse, L ∈ [3,16], m ∈ [4,64], n ∈ {1,4}).
inline IdentityCase random_identity_case(std::uint64_t seed) {
  const KeyedStream s(seed);
  IdentityCase c;
  const bool resnet = s.index_below(0, 2) == 1;
  const Activation act = s.index_below(1, 2) == 1 ? Activation::ReLU : Activation::Linear;
  const std::size_t L = 3 + s.index_below(2, 14);
  const std::size_t m = 4 + s.index_below(3, 61);
  const std::size_t d = 1 + s.index_below(4, 8);
  const std::size_t k = 1 + s.index_below(5, 4);
  const std::size_t n = s.index_below(6, 2) == 1 ? 4 : 1;
  c.setting = s.index_below(7, 2) == 1 ? Setting::Sparse : Setting::Dense;
  c.loss = s.index_below(8, 2) == 1 ? LossKind::RmsLoss : LossKind::LinearLoss;
  c.lr_mode = s.index_below(9, 2) == 1 ? LrMode::ScaleInvariantQuadratic : LrMode::Fixed;
  const double beta = 0.1 + 0.9 * s.uniform(10);
  c.arch = resnet ? ArchSpec::resnet(d, m, k, L, beta, act, n) : ArchSpec::mlp(d, m, k, L, act, n);
  return c;
}

struct IdentityOutcome {
  IdentityCase c;
  double max_feature_residual = 0.0;
  double max_backward_residual = 0.0;
};

inline IdentityOutcome run_identity_case(std::uint64_t seed) {
  IdentityOutcome out;
  out.c = random_identity_case(seed);
  const ArchSpec& a = out.c.arch;
  ScalingScheme s = bfa_scheme(a, true);
  s.sigma_out = 1.0 / std::sqrt(static_cast<double>(a.m));
  s.lr_mode = out.c.lr_mode;
  if (s.lr_mode == LrMode::Fixed) s.eta_in = s.eta_hid = s.eta_out = 0.1;
  const Model model = init_model(a, s, derive_seed(seed, {3}));
  const Mat x = as_batch(make_batch_input(out.c.setting, a.d, a.batch, derive_seed(seed, {1})), a.d);
  LossSpec loss = make_loss(out.c.setting, a.k, derive_seed(seed, {2}));
  if (out.c.loss == LossKind::RmsLoss) loss = LossSpec::rms(gaussian_vector(a.k, 1.0, derive_seed(seed, {4})));
  const ForwardTrace t = forward(model, x, loss);
  const BackwardTrace bt = backward(model, t, loss);
  const ResolvedLRs lrs = resolve_lrs(s, bt, a.L);
  for (const auto& d : all_layer_diagnostics(model, loss, t, bt, lrs, ExactMethod{})) {
    if (!d.zero_velocity) out.max_feature_residual = std::max(out.max_feature_residual, d.feature_speed_residual);
    if (std::isfinite(d.backward_speed_residual))
      out.max_backward_residual = std::max(out.max_backward_residual, d.backward_speed_residual);
  }
  return out;
}

// ---------------------------------------------------------------------------
// output helpers

namespace detail {

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::vector<std::string> base_columns() {
  return {"experiment", "arch", "activation", "setting", "scheme", "d", "m", "k", "L", "n", "beta", "seed", "dt"};
}

inline std::vector<std::string> base_cells(const std::string& experiment, const ArchSpec& a, Setting setting,
                                           const std::string& scheme, std::uint64_t seed, double dt) {
  return {experiment,
          std::string(to_string(a.kind)),
          std::string(to_string(a.activation)),
          std::string(to_string(setting)),
          scheme,
          format_int(a.d),
          format_int(a.m),
          format_int(a.k),
          format_int(a.L),
          format_int(a.batch),
          format_number(a.beta),
          format_int(seed),
          format_number(dt)};
}

inline std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

inline CsvTable make_table(const ExperimentConfig& cfg, std::vector<std::string> columns) {
  CsvTable t(std::move(columns));
  t.add_meta("experiment", cfg.experiment);
  t.add_meta("config_hash", hex64(config_hash(cfg)));
  t.add_meta("base_seed", format_int(cfg.seed));
  t.add_meta("code_version", std::string(kCodeVersion));
  t.add_meta("lr_base", "1");
  auto j = to_json(cfg);
  for (const char* key : {"workers", "out", "svg"}) j.erase(key);  // do not affect results
  t.add_meta("config", j.dump());
  t.add_meta(std::string(kTimestampKey), utc_timestamp());
  return t;
}

inline std::filesystem::path write_table(const ExperimentConfig& cfg, const CsvTable& t, const std::string& name,
                                         RunResult& res) {
  const auto path = std::filesystem::path(cfg.out) / (name + ".csv");
  t.write(path);
  res.files.push_back(path);
  return path;
}

inline void maybe_plot(const ExperimentConfig& cfg, const std::filesystem::path& csv, const PlotSpec& spec,
                       const std::string& name, RunResult& res) {
  if (!cfg.svg) return;
  const auto path = std::filesystem::path(cfg.out) / (name + ".svg");
  emit_plot(csv, spec, path);
  res.files.push_back(path);
}

template <class T>
T value_or(const std::optional<T>& o, T def) {
  return o ? *o : def;
}

template <class T>
std::vector<T> grid_or(const std::vector<T>& g, std::vector<T> def) {
  return g.empty() ? def : g;
}

struct Family {
  std::string label;
  ArchKind kind;
  double c;  // β = c/√L for ResNets
};

inline std::vector<Family> beta_families(const std::vector<double>& cs, bool include_mlp) {
  std::vector<Family> f;
  if (include_mlp) f.push_back({"MLP", ArchKind::MLP, 0.0});
  for (double c : cs) f.push_back({"beta=" + format_number(c) + "/sqrt(L)", ArchKind::ResNet, c});
  return f;
}

inline std::optional<ArchSpec> family_arch(const Family& f, std::size_t d, std::size_t m, std::size_t k, std::size_t L,
                                           Activation act, std::size_t n = 1) {
  if (f.kind == ArchKind::MLP) return ArchSpec::mlp(d, m, k, L, act, n);
  const double beta = f.c / std::sqrt(static_cast<double>(L));
  if (beta > 1.0) return std::nullopt;
  return ArchSpec::resnet(d, m, k, L, beta, act, n);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// experiments

inline RunResult run_fig1a(const ExperimentConfig& cfg) {
  RunResult res;
  const std::size_t d = detail::value_or(cfg.d, std::size_t{10}), m = detail::value_or(cfg.m, std::size_t{200});
  const std::size_t k = detail::value_or(cfg.k, std::size_t{1}), L = detail::value_or(cfg.L, std::size_t{200});
  const double dt = detail::value_or(cfg.dt, 1e-3);
  const auto fams = detail::beta_families(detail::grid_or(cfg.grid_beta, {2.0, 1.0, 0.5}), true);
  const std::size_t S = cfg.seeds;
  struct Task {
    ArchSpec arch;
    std::string label;
    std::size_t s;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (std::size_t fi = 0; fi < fams.size(); ++fi) {
    const auto arch = detail::family_arch(fams[fi], d, m, k, L, Activation::ReLU);
    if (!arch) continue;
    for (std::size_t s = 0; s < S; ++s) tasks.push_back({*arch, fams[fi].label, s, derive_seed(cfg.seed, {1, fi, s})});
  }
  const auto out = parallel_map<BfaSample>(tasks.size(), cfg.workers, [&](std::size_t i) {
    return bfa_sample(tasks[i].arch, bfa_scheme(tasks[i].arch, false), cfg.setting, tasks[i].seed, dt);
  });
  CsvTable t = detail::make_table(cfg, detail::concat(detail::base_columns(),
                                                      {"family", "seed_index", "v", "cos_theta", "theta", "cos_theta_fd"}));
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    for (std::size_t v = 1; v < L; ++v) {
      const double c = out[i].cos_exact[v - 1];
      t.add_row(detail::concat(
          detail::base_cells(cfg.experiment, tasks[i].arch, cfg.setting, "BC", tasks[i].seed, dt),
          {tasks[i].label, format_int(tasks[i].s), format_int(v), format_number(c),
           format_number(std::acos(std::clamp(c, -1.0, 1.0))), format_number(out[i].cos_fd[v - 1])}));
    }
  }
  const auto path = detail::write_table(cfg, t, "fig1a", res);
  detail::maybe_plot(cfg, path, {"v", "theta", "family", false, false, "BFA vs layer"}, "fig1a", res);
  return res;
}

/// cos θ_{L-1} per (family, L, seed) with a fitted exponent per family.
inline RunResult run_fig1b(const ExperimentConfig& cfg) {
  RunResult res;
  const std::size_t d = detail::value_or(cfg.d, std::size_t{10}), m = detail::value_or(cfg.m, std::size_t{200});
  const std::size_t k = detail::value_or(cfg.k, std::size_t{1});
  const double dt = detail::value_or(cfg.dt, 1e-3);
  const auto Ls = detail::grid_or(cfg.grid_L, {8, 16, 32, 64, 128});
  const auto fams = detail::beta_families(detail::grid_or(cfg.grid_beta, {2.0, 1.0, 0.5}), true);
  const std::size_t S = cfg.seeds;
  struct Task {
    std::size_t fi, li, s;
    ArchSpec arch;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (std::size_t fi = 0; fi < fams.size(); ++fi)
    for (std::size_t li = 0; li < Ls.size(); ++li) {
      const auto arch = detail::family_arch(fams[fi], d, m, k, Ls[li], Activation::ReLU);
      if (!arch) continue;
      for (std::size_t s = 0; s < S; ++s) tasks.push_back({fi, li, s, *arch, derive_seed(cfg.seed, {2, fi, Ls[li], s})});
    }
  const auto out = parallel_map<double>(tasks.size(), cfg.workers, [&](std::size_t i) {
    const auto& a = tasks[i].arch;
    return bfa_sample(a, bfa_scheme(a, false), cfg.setting, tasks[i].seed).cos_exact[a.L - 2];
  });

  std::vector<PowerLawFit> fits(fams.size(), PowerLawFit{NAN, NAN, NAN});
  for (std::size_t fi = 0; fi < fams.size(); ++fi) {
    std::vector<double> xs;
    std::vector<std::vector<double>> ys;
    for (std::size_t li = 0; li < Ls.size(); ++li) {
      std::vector<double> v;
      for (std::size_t i = 0; i < tasks.size(); ++i)
        if (tasks[i].fi == fi && tasks[i].li == li) v.push_back(out[i]);
      if (v.empty()) continue;
      xs.push_back(static_cast<double>(Ls[li]));
      ys.push_back(v);
    }
    if (xs.size() >= 3) fits[fi] = fit_medians(xs, ys);
    res.notes.push_back("fig1b " + fams[fi].label + ": exponent " + format_number(fits[fi].exponent));
  }
  CsvTable t = detail::make_table(
      cfg, detail::concat(detail::base_columns(), {"family", "seed_index", "cos_theta", "theta", "fit_exponent", "fit_r2"}));
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const auto& f = fits[tasks[i].fi];
    t.add_row(detail::concat(detail::base_cells(cfg.experiment, tasks[i].arch, cfg.setting, "BC", tasks[i].seed, dt),
                             {fams[tasks[i].fi].label, format_int(tasks[i].s), format_number(out[i]),
                              format_number(std::acos(std::clamp(out[i], -1.0, 1.0))), format_number(f.exponent),
                              format_number(f.r_squared)}));
  }
  const auto path = detail::write_table(cfg, t, "fig1b", res);
  detail::maybe_plot(cfg, path, {"L", "cos_theta", "family", true, true, "Output BFA vs depth"}, "fig1b", res);
  return res;
}

inline RunResult run_fig1c(const ExperimentConfig& cfg) {
  RunResult res;
  const std::size_t d = detail::value_or(cfg.d, std::size_t{10}), m = detail::value_or(cfg.m, std::size_t{100});
  const std::size_t k = detail::value_or(cfg.k, std::size_t{1}), L = detail::value_or(cfg.L, std::size_t{1024});
  const double dt = detail::value_or(cfg.dt, 1e-3);
  const auto cs = detail::grid_or(cfg.grid_c, {0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0});
  const std::size_t S = cfg.seeds;
  struct Task {
    std::size_t ci, s;
    ArchSpec arch;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (std::size_t ci = 0; ci < cs.size(); ++ci) {
    const double beta = cs[ci] / std::sqrt(static_cast<double>(L));
    if (beta > 1.0) continue;
    for (std::size_t s = 0; s < S; ++s)
      tasks.push_back({ci, s, ArchSpec::resnet(d, m, k, L, beta, Activation::ReLU), derive_seed(cfg.seed, {3, ci, s})});
  }
  const auto out = parallel_map<double>(tasks.size(), cfg.workers, [&](std::size_t i) {
    const auto& a = tasks[i].arch;
    return bfa_sample(a, bfa_scheme(a, false), cfg.setting, tasks[i].seed).cos_exact[a.L - 2];
  });
  // Seed-averaged curve; the large-c exponent is reported only.
  std::vector<double> xs, means;
  for (std::size_t ci = 0; ci < cs.size(); ++ci) {
    double sum = 0.0;
    std::size_t cnt = 0;
    for (std::size_t i = 0; i < tasks.size(); ++i)
      if (tasks[i].ci == ci) sum += out[i], ++cnt;
    if (cnt && cs[ci] >= 4.0) xs.push_back(cs[ci]), means.push_back(sum / static_cast<double>(cnt));
  }
  PowerLawFit fit{NAN, NAN, NAN};
  if (xs.size() >= 3 && std::all_of(means.begin(), means.end(), [](double v) { return v > 0.0; }))
    fit = fit_power_law(xs, means);
  res.notes.push_back("fig1c exponent over c in [4,32]: " + format_number(fit.exponent));
  CsvTable t = detail::make_table(
      cfg, detail::concat(detail::base_columns(), {"c", "seed_index", "cos_theta", "theta", "fit_exponent_c_ge_4"}));
  for (std::size_t i = 0; i < tasks.size(); ++i)
    t.add_row(detail::concat(detail::base_cells(cfg.experiment, tasks[i].arch, cfg.setting, "BC", tasks[i].seed, dt),
                             {format_number(cs[tasks[i].ci]), format_int(tasks[i].s), format_number(out[i]),
                              format_number(std::acos(std::clamp(out[i], -1.0, 1.0))), format_number(fit.exponent)}));
  const auto path = detail::write_table(cfg, t, "fig1c", res);
  detail::maybe_plot(cfg, path, {"c", "cos_theta", "", true, true, "Output BFA vs branch scale"}, "fig1c", res);
  return res;
}

namespace detail {

struct SensTask {
  std::string scheme, family;
  std::size_t gi, s;
  ArchSpec arch;
  ScalingScheme sch;
  std::uint64_t seed;
};

inline RunResult finish_sensitivity(const ExperimentConfig& cfg, const std::vector<SensTask>& tasks, double dt,
                                    const std::string& name, RunResult res) {
  const auto out = parallel_map<double>(tasks.size(), cfg.workers, [&](std::size_t i) {
    return sensitivity_sample(tasks[i].arch, tasks[i].sch, cfg.setting, tasks[i].seed, dt);
  });
  // Group by (scheme, family) in first-appearance order.
  std::vector<std::pair<std::string, std::string>> keys;
  for (const auto& t : tasks)
    if (std::find(keys.begin(), keys.end(), std::make_pair(t.scheme, t.family)) == keys.end())
      keys.emplace_back(t.scheme, t.family);
  std::map<std::pair<std::string, std::string>, PowerLawFit> fits;
  for (const auto& key : keys) {
    std::map<std::size_t, std::vector<double>> by_g;
    std::map<std::size_t, double> x_of;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      if (tasks[i].scheme != key.first || tasks[i].family != key.second) continue;
      by_g[tasks[i].gi].push_back(out[i]);
      x_of[tasks[i].gi] = key.second == "vary_m" ? static_cast<double>(tasks[i].arch.m) : static_cast<double>(tasks[i].arch.L);
    }
    std::vector<double> xs;
    std::vector<std::vector<double>> ys;
    for (auto& [g, v] : by_g) xs.push_back(x_of[g]), ys.push_back(v);
    fits[key] = fit_medians(xs, ys);
    res.notes.push_back(name + " " + key.first + " " + key.second + ": exponent " + format_number(fits[key].exponent));
  }
  CsvTable t = make_table(
      cfg, concat(base_columns(), {"family", "seed_index", "sensitivity", "fit_exponent", "fit_r2"}));
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const auto& f = fits[{tasks[i].scheme, tasks[i].family}];
    t.add_row(concat(base_cells(cfg.experiment, tasks[i].arch, cfg.setting, tasks[i].scheme, tasks[i].seed, dt),
                     {tasks[i].family, format_int(tasks[i].s), format_number(out[i]), format_number(f.exponent),
                      format_number(f.r_squared)}));
  }
  const auto path = write_table(cfg, t, name, res);
  maybe_plot(cfg, path, {"L", "sensitivity", "scheme", true, true, "Sensitivity S_{L-1}"}, name, res);
  return res;
}

}  // namespace detail

/// Sensitivities of NTK, MF+μP and FSC ReLU MLPs versus depth, and NTK versus width.
inline RunResult run_fig2a(const ExperimentConfig& cfg) {
  const std::size_t d = detail::value_or(cfg.d, std::size_t{4}), m = detail::value_or(cfg.m, std::size_t{400});
  const std::size_t k = detail::value_or(cfg.k, std::size_t{2}), n = detail::value_or(cfg.batch, std::size_t{32});
  const std::size_t L_fixed = detail::value_or(cfg.L, std::size_t{8});
  const double dt = detail::value_or(cfg.dt, 1e-2);
  const auto Ls = detail::grid_or(cfg.grid_L, {8, 16, 32, 64, 128});
  const auto ms = detail::grid_or(cfg.grid_m, {64, 128, 256, 512});
  std::vector<detail::SensTask> tasks;
  for (SchemeName nm : {SchemeName::NTK, SchemeName::MFmuP, SchemeName::FSC_MLP})
    for (std::size_t gi = 0; gi < Ls.size(); ++gi)
      for (std::size_t s = 0; s < cfg.seeds; ++s) {
        const ArchSpec a = ArchSpec::mlp(d, m, k, Ls[gi], Activation::ReLU, n);
        tasks.push_back({std::string(to_string(nm)), "vary_L", gi, s, a, named_scheme(nm, a, cfg.setting),
                         derive_seed(cfg.seed, {4, m, Ls[gi], s})});
      }
  for (std::size_t gi = 0; gi < ms.size(); ++gi)
    for (std::size_t s = 0; s < cfg.seeds; ++s) {
      const ArchSpec a = ArchSpec::mlp(d, ms[gi], k, L_fixed, Activation::ReLU, n);
      tasks.push_back({"NTK", "vary_m", gi, s, a, named_scheme(SchemeName::NTK, a, cfg.setting),
                       derive_seed(cfg.seed, {4, ms[gi], L_fixed, s})});
    }
  return detail::finish_sensitivity(cfg, tasks, dt, "fig2a", {});
}

/// Sensitivities of ReLU ResNets (FSC_ResNet scaling) for branch scales c/√L.
inline RunResult run_fig2b(const ExperimentConfig& cfg) {
  const std::size_t d = detail::value_or(cfg.d, std::size_t{4}), m = detail::value_or(cfg.m, std::size_t{50});
  const std::size_t k = detail::value_or(cfg.k, std::size_t{2}), n = detail::value_or(cfg.batch, std::size_t{32});
  const double dt = detail::value_or(cfg.dt, 1e-2);
  const auto Ls = detail::grid_or(cfg.grid_L, {8, 16, 32, 64, 128});
  const auto cs = detail::grid_or(cfg.grid_beta, {1.0, 0.5});
  std::vector<detail::SensTask> tasks;
  for (std::size_t ci = 0; ci < cs.size(); ++ci)
    for (std::size_t gi = 0; gi < Ls.size(); ++gi) {
      const double beta = cs[ci] / std::sqrt(static_cast<double>(Ls[gi]));
      if (beta > 1.0) continue;
      for (std::size_t s = 0; s < cfg.seeds; ++s) {
        const ArchSpec a = ArchSpec::resnet(d, m, k, Ls[gi], beta, Activation::ReLU, n);
        tasks.push_back({"FSC_ResNet(beta=" + format_number(cs[ci]) + "/sqrt(L))", "vary_L", gi, s, a,
                         named_scheme(SchemeName::FSC_ResNet, a, cfg.setting), derive_seed(cfg.seed, {5, ci, Ls[gi], s})});
      }
    }
  return detail::finish_sensitivity(cfg, tasks, dt, "fig2b", {});
}

// ---------------------------------------------------------------------------
// property audits

struct ExpectedPattern {
  std::string scheme;
  std::map<Property, bool> expect;  // property -> expected pass flag
};

struct AuditSettings {
  ArchKind kind = ArchKind::MLP;
  Activation activation = Activation::ReLU;
  std::size_t d = 10, k = 1;
  std::size_t fixed_m = 1024, fixed_L = 4;
  std::vector<std::size_t> grid_m{64, 128, 256, 512}, grid_L{8, 16, 32, 64};
};

/// Both families for one scheme; a property passes only if it passes in both.
struct SchemeAudit {
  std::string scheme;
  PropertyReport vary_m, vary_L;
  bool pass(Property p) const { return vary_m.at(p).pass && vary_L.at(p).pass; }
};

inline SchemeAudit audit_scheme(const std::string& label, const SchemeSource& source, const AuditSettings& st,
                                Setting setting, std::size_t seeds, std::uint64_t base_seed, std::size_t workers) {
  SchemeAudit out;
  out.scheme = label;
  for (SweepFamily fam : {SweepFamily::VaryM, SweepFamily::VaryL}) {
    PropertySweepConfig c;
    c.scheme_name = label;
    c.scheme = source;
    c.kind = st.kind;
    c.activation = st.activation;
    c.setting = setting;
    c.d = st.d;
    c.k = st.k;
    c.family = fam;
    c.grid = fam == SweepFamily::VaryM ? st.grid_m : st.grid_L;
    c.fixed_m = st.fixed_m;
    c.fixed_L = st.fixed_L;
    c.seeds = seeds;
    c.base_seed = base_seed;
    c.workers = workers;
    (fam == SweepFamily::VaryM ? out.vary_m : out.vary_L) = property_sweep(c);
  }
  return out;
}

namespace detail {

inline RunResult write_audits(const ExperimentConfig& cfg, const AuditSettings& st, const std::vector<SchemeAudit>& audits,
                              const std::vector<ExpectedPattern>& expected, const std::string& name) {
  RunResult res;
  CsvTable rows = make_table(cfg, {"experiment", "scheme", "family", "arch", "activation", "setting", "d", "m", "k", "L",
                                   "beta", "seed_index", "seed", "property", "quantity", "value", "c_in", "c_hid", "c_out"});
  CsvTable sum = make_table(cfg, {"experiment", "scheme", "family", "property", "bound", "quantity", "exponent", "r2",
                                  "band", "pass", "expected", "matches"});
  for (std::size_t ai = 0; ai < audits.size(); ++ai) {
    const auto& au = audits[ai];
    for (const PropertyReport* rep : {&au.vary_m, &au.vary_L}) {
      const std::string fam(to_string(rep->family));
      for (const auto& r : rep->rows)
        for (std::size_t q = 0; q < kPropertyQuantities.size(); ++q)
          rows.add_row({cfg.experiment, au.scheme, fam, std::string(to_string(st.kind)),
                        std::string(to_string(st.activation)), std::string(to_string(cfg.setting)), format_int(st.d),
                        format_int(r.m), format_int(st.k), format_int(r.L), format_number(r.beta),
                        format_int(r.seed_index), format_int(r.seed),
                        std::string(to_string(kPropertyQuantities[q].property)), std::string(kPropertyQuantities[q].name),
                        format_number(r.values[q]), format_number(r.c_in), format_number(r.c_hid),
                        format_number(r.c_out)});
      for (const auto& s : rep->summary) {
        std::string exp_str = "";
        std::string match = "";
        if (ai < expected.size()) {
          const auto it = expected[ai].expect.find(s.property);
          if (it != expected[ai].expect.end()) {
            exp_str = it->second ? "pass" : "fail";
            match = (au.pass(s.property) == it->second) ? "yes" : "no";
          }
        }
        sum.add_row({cfg.experiment, au.scheme, fam, std::string(to_string(s.property)), std::string(to_string(s.bound)),
                     s.quantity, format_number(s.exponent), format_number(s.r_squared),
                     format_number(rep->bands.exponent), s.pass ? "pass" : "fail", exp_str, match});
      }
    }
    if (ai < expected.size())
      for (const auto& [p, want] : expected[ai].expect)
        if (au.pass(p) != want)
          res.failures.push_back(name + ": " + au.scheme + " " + std::string(to_string(p)) + " expected " +
                                 (want ? "pass" : "fail") + " but measured " + (au.pass(p) ? "pass" : "fail"));
  }
  write_table(cfg, rows, name, res);
  write_table(cfg, sum, name + "_summary", res);
  return res;
}

}  // namespace detail

inline AuditSettings audit_settings(const ExperimentConfig& cfg, AuditSettings st) {
  if (cfg.d) st.d = *cfg.d;
  if (cfg.k) st.k = *cfg.k;
  if (cfg.m) st.fixed_m = *cfg.m;
  if (cfg.L) st.fixed_L = *cfg.L;
  if (!cfg.grid_m.empty()) st.grid_m = cfg.grid_m;
  if (!cfg.grid_L.empty()) st.grid_L = cfg.grid_L;
  return st;
}

/// Expected (SP, BC, LD, FL) pattern for the MLP schemes.
inline std::vector<ExpectedPattern> table1_expectations() {
  return {{"NTK", {{Property::SP, true}, {Property::BC, true}, {Property::LD, true}, {Property::FL, false}}},
          {"MFmuP", {{Property::SP, true}, {Property::BC, true}, {Property::LD, false}, {Property::FL, true}}},
          {"FSC_MLP", {{Property::SP, true}, {Property::BC, true}, {Property::LD, true}, {Property::FL, true}}}};
}

inline RunResult run_table1_audit(const ExperimentConfig& cfg) {
  const AuditSettings st = audit_settings(cfg, {});
  std::vector<SchemeAudit> audits;
  for (SchemeName nm : {SchemeName::NTK, SchemeName::MFmuP, SchemeName::FSC_MLP}) {
    const Setting setting = cfg.setting;
    audits.push_back(audit_scheme(std::string(to_string(nm)),
                                  [nm, setting](const ArchSpec& a) { return named_scheme(nm, a, setting); }, st,
                                  cfg.setting, cfg.seeds, derive_seed(cfg.seed, {6}), cfg.workers));
  }
  return detail::write_audits(cfg, st, audits, table1_expectations(), "table1_audit");
}

inline RunResult run_table2_audit(const ExperimentConfig& cfg) {
  AuditSettings def;
  def.kind = ArchKind::ResNet;
  def.activation = Activation::Linear;
  const AuditSettings st = audit_settings(cfg, def);
  const Setting setting = cfg.setting;
  std::vector<SchemeAudit> audits{audit_scheme(
      "FSC_ResNet", [setting](const ArchSpec& a) { return named_scheme(SchemeName::FSC_ResNet, a, setting); }, st,
      cfg.setting, cfg.seeds, derive_seed(cfg.seed, {7}), cfg.workers)};
  std::vector<ExpectedPattern> expected{
      {"FSC_ResNet", {{Property::SP, true}, {Property::BC, true}, {Property::LD, true}, {Property::FL, true}}}};
  return detail::write_audits(cfg, st, audits, expected, "table2_audit");
}

// ---------------------------------------------------------------------------
// suites

inline constexpr double kIdentityTolerance = 1e-10;

inline RunResult run_identity_suite(const ExperimentConfig& cfg) {
  RunResult res;
  const std::size_t count = std::max<std::size_t>(50, 10 * cfg.seeds);
  const auto out = parallel_map<IdentityOutcome>(count, cfg.workers, [&](std::size_t i) {
    return run_identity_case(derive_seed(cfg.seed, {8, i}));
  });
  CsvTable t = detail::make_table(
      cfg, detail::concat(detail::base_columns(), {"loss", "lr_mode", "max_feature_residual", "max_backward_residual"}));
  for (std::size_t i = 0; i < count; ++i) {
    const auto& o = out[i];
    t.add_row(detail::concat(detail::base_cells(cfg.experiment, o.c.arch, o.c.setting, "random",
                                                derive_seed(cfg.seed, {8, i}), 0.0),
                             {o.c.loss == LossKind::LinearLoss ? "linear" : "rms", std::string(to_string(o.c.lr_mode)),
                              format_number(o.max_feature_residual), format_number(o.max_backward_residual)}));
    if (!(o.max_feature_residual < kIdentityTolerance))
      res.failures.push_back("identity_suite case " + std::to_string(i) + ": feature residual " +
                             format_number(o.max_feature_residual));
    if (!(o.max_backward_residual < kIdentityTolerance))
      res.failures.push_back("identity_suite case " + std::to_string(i) + ": backward residual " +
                             format_number(o.max_backward_residual));
  }
  res.notes.push_back("identity_suite: " + std::to_string(count) + " configurations");
  detail::write_table(cfg, t, "identity_suite", res);
  return res;
}

struct InvarianceTrial {
  double rescale_si = NAN, rescale_fixed = NAN, reparam_quadratic = NAN, reparam_constant = NAN;
};

/// Random blockwise factors, log-uniform in [1/4, 4] and renormalized to product 1.
inline std::vector<double> random_unit_product_factors(std::size_t L, std::uint64_t seed) {
  const KeyedStream s(seed);
  std::vector<double> logs(L);
  double mean = 0.0;
  for (std::size_t i = 0; i < L; ++i) mean += logs[i] = std::log(4.0) * (2.0 * s.uniform(i) - 1.0);
  mean /= static_cast<double>(L);
  std::vector<double> out(L);
  for (std::size_t i = 0; i < L; ++i) out[i] = std::exp(logs[i] - mean);
  return out;
}

inline InvarianceTrial run_invariance_trial(std::uint64_t seed) {
  const ArchSpec a = ArchSpec::mlp(4, 16, 2, 4);
  ScalingScheme sch = named_scheme(SchemeName::FSC_MLP, a);
  const Model model = init_model(a, sch, derive_seed(seed, {3}));
  const Mat x = as_batch(make_input(Setting::Dense, a.d, derive_seed(seed, {1})), a.d);
  const LossSpec loss = make_loss(Setting::Dense, a.k, derive_seed(seed, {2}));
  const auto sigma = random_unit_product_factors(a.L, derive_seed(seed, {4}));

  InvarianceTrial tr;
  ScalingScheme si = sch;
  si.lr_mode = LrMode::ScaleInvariantQuadratic;
  si.eta_in = si.eta_hid = si.eta_out = 1.0;
  tr.rescale_si = rescaling_invariance(model, loss, x, sigma, 10, 0.1, si);
  ScalingScheme fixed = sch;
  fixed.eta_in = fixed.eta_hid = fixed.eta_out = 1.0;
  tr.rescale_fixed = rescaling_invariance(model, loss, x, sigma, 10, 0.1, fixed);

  const auto alpha = random_unit_product_factors(a.L, derive_seed(seed, {5}));
  std::vector<double> alpha_free(alpha.size());
  for (std::size_t i = 0; i < alpha.size(); ++i) alpha_free[i] = alpha[i] * 1.5;
  const BlockGradient f = network_objective(a, loss, x);
  tr.reparam_quadratic = reparam_invariance(f, model.weights, alpha_free, quadratic_lr_rule(0.1));
  tr.reparam_constant = reparam_invariance(f, model.weights, alpha_free, constant_lr_rule(0.1));
  return tr;
}

inline RunResult run_invariance_suite(const ExperimentConfig& cfg) {
  RunResult res;
  const auto out = parallel_map<InvarianceTrial>(cfg.seeds, cfg.workers, [&](std::size_t i) {
    return run_invariance_trial(derive_seed(cfg.seed, {9, i}));
  });
  CsvTable t = detail::make_table(cfg, {"experiment", "trial", "seed", "rescale_scale_invariant", "rescale_fixed_control",
                                        "reparam_quadratic", "reparam_constant_control"});
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto& o = out[i];
    t.add_row({cfg.experiment, format_int(i), format_int(derive_seed(cfg.seed, {9, i})), format_number(o.rescale_si),
               format_number(o.rescale_fixed), format_number(o.reparam_quadratic), format_number(o.reparam_constant)});
    const std::string id = "invariance trial " + std::to_string(i) + ": ";
    if (!(o.rescale_si < 1e-8)) res.failures.push_back(id + "rescaling deviation " + format_number(o.rescale_si));
    if (!(o.rescale_fixed > 1e-2)) res.failures.push_back(id + "fixed-LR control too small " + format_number(o.rescale_fixed));
    if (!(o.reparam_quadratic < 1e-10))
      res.failures.push_back(id + "reparameterization deviation " + format_number(o.reparam_quadratic));
    if (!(o.reparam_constant > 1e-3))
      res.failures.push_back(id + "constant-LR control too small " + format_number(o.reparam_constant));
  }
  detail::write_table(cfg, t, "invariance_suite", res);
  return res;
}

struct ZeroInitOutcome {
  double ratio = NAN;             // m·‖z_{L-1}(1)‖_rms/√L
  double output_residual = NAN;   // relative error of f_L(1) = −η‖g_{L-1}‖²b_L
  double max_hidden_grad = NAN;   // largest non-output gradient norm at step 0
};

inline ZeroInitOutcome run_zero_init_case(const ArchSpec& arch, Setting setting, std::uint64_t seed) {
  const ZeroOutputInit z = zero_output_init(arch, setting, seed);
  const std::size_t L = arch.L;
  const ForwardTrace t0 = forward(z.model, z.x, z.loss);
  const BackwardTrace b0 = backward(z.model, t0, z.loss);
  ZeroInitOutcome o;
  o.max_hidden_grad = 0.0;
  for (std::size_t ell = 1; ell < L; ++ell) o.max_hidden_grad = std::max(o.max_hidden_grad, b0.grad_norm(ell));
  const Model m1 = gd_step(z.model, b0, zero_output_lrs(z), 1.0);
  const ForwardTrace t1 = forward(m1, z.x, z.loss);
  const BackwardTrace b1 = backward(m1, t1, z.loss);
  o.ratio = static_cast<double>(arch.m) * rms_norm(b1.z[L - 1]) / std::sqrt(static_cast<double>(L));
  if (arch.batch == 1) {
    const Mat expected = -z.eta_L0 * t0.g[L - 1].squaredNorm() * b0.b[L];
    o.output_residual = (t1.f[L] - expected).norm() / expected.norm();
  }
  return o;
}

inline RunResult run_zero_init(const ExperimentConfig& cfg) {
  RunResult res;
  const std::size_t d = detail::value_or(cfg.d, std::size_t{10}), m = detail::value_or(cfg.m, std::size_t{400});
  const std::size_t k = detail::value_or(cfg.k, std::size_t{1});
  const auto Ls = detail::grid_or(cfg.grid_L, {16, 32, 64, 128});
  const std::size_t S = cfg.seeds;
  const auto out = parallel_map<ZeroInitOutcome>(Ls.size() * S, cfg.workers, [&](std::size_t i) {
    return run_zero_init_case(ArchSpec::mlp(d, m, k, Ls[i / S]), cfg.setting, derive_seed(cfg.seed, {10, Ls[i / S], i % S}));
  });
  CsvTable t = detail::make_table(cfg, detail::concat(detail::base_columns(), {"seed_index", "eta_L0_ratio",
                                                                               "output_residual", "max_hidden_grad"}));
  std::vector<double> meds;
  for (std::size_t li = 0; li < Ls.size(); ++li) {
    std::vector<double> v;
    for (std::size_t s = 0; s < S; ++s) {
      const auto& o = out[li * S + s];
      v.push_back(o.ratio);
      t.add_row(detail::concat(detail::base_cells(cfg.experiment, ArchSpec::mlp(d, m, k, Ls[li]), cfg.setting,
                                                  "FSC_MLP_zero_output", derive_seed(cfg.seed, {10, Ls[li], s}), 1.0),
                               {format_int(s), format_number(o.ratio), format_number(o.output_residual),
                                format_number(o.max_hidden_grad)}));
      if (o.max_hidden_grad != 0.0) res.failures.push_back("zero_init: non-output gradient is not zero");
      if (!(o.output_residual < 1e-12)) res.failures.push_back("zero_init: f_L(1) identity residual " + format_number(o.output_residual));
    }
    meds.push_back(median(v));
  }
  const double band = *std::max_element(meds.begin(), meds.end()) / *std::min_element(meds.begin(), meds.end());
  res.notes.push_back("zero_init: max/min of median ratio over L = " + format_number(band));
  if (!(band <= 4.0)) res.failures.push_back("zero_init: ratio band " + format_number(band) + " exceeds 4");
  const auto path = detail::write_table(cfg, t, "zero_init", res);
  detail::maybe_plot(cfg, path, {"L", "eta_L0_ratio", "", true, false, "m |z_{L-1}(1)|_rms / sqrt(L)"}, "zero_init", res);
  return res;
}

/// Dispatches on the experiment id after creating the output directory.
inline RunResult run(const ExperimentConfig& cfg) {
  cfg.validate();
  std::error_code ec;
  std::filesystem::create_directories(cfg.out, ec);
  if (ec || !std::filesystem::is_directory(cfg.out)) throw std::runtime_error("unwritable output dir: " + cfg.out);
  const std::string& id = cfg.experiment;
  if (id == "fig1a") return run_fig1a(cfg);
  if (id == "fig1b") return run_fig1b(cfg);
  if (id == "fig1c") return run_fig1c(cfg);
  if (id == "fig2a") return run_fig2a(cfg);
  if (id == "fig2b") return run_fig2b(cfg);
  if (id == "table1_audit") return run_table1_audit(cfg);
  if (id == "table2_audit") return run_table2_audit(cfg);
  if (id == "identity_suite") return run_identity_suite(cfg);
  if (id == "invariance_suite") return run_invariance_suite(cfg);
  if (id == "zero_init") return run_zero_init(cfg);
  throw std::invalid_argument("invalid experiment id: " + id);
}

}  // namespace featspeed::harness
