#pragma once
// Named hyper-parameter scalings, automatic scale calibration, zero-output
// initialization, scaled-network property sweeps and rescaling invariances.

#include "featspeed/diagnostics.hpp"
#include "featspeed/parallel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace featspeed {

// ---------------------------------------------------------------------------
// named schemes

enum class SchemeName { NTK, MFmuP, FSC_MLP, FSC_ResNet };

inline std::string_view to_string(SchemeName s) {
  switch (s) {
    case SchemeName::NTK: return "NTK";
    case SchemeName::MFmuP: return "MFmuP";
    case SchemeName::FSC_MLP: return "FSC_MLP";
    case SchemeName::FSC_ResNet: return "FSC_ResNet";
  }
  return "?";
}

inline SchemeName parse_scheme_name(std::string_view s) {
  if (s == "NTK") return SchemeName::NTK;
  if (s == "MFmuP" || s == "MF+muP") return SchemeName::MFmuP;
  if (s == "FSC_MLP" || s == "FSC") return SchemeName::FSC_MLP;
  if (s == "FSC_ResNet") return SchemeName::FSC_ResNet;
  throw std::invalid_argument("unknown scheme: " + std::string(s));
}

struct NamedScheme {
  SchemeName name = SchemeName::FSC_MLP;
  Setting setting = Setting::Dense;
  std::size_t d = 1, m = 1, k = 1, L = 2;
  double beta = 1.0;
};

/// Table values with Fixed LR mode. In the Sparse setting k and d are
/// replaced by 1 in every formula.
inline ScalingScheme named_scheme(const NamedScheme& spec) {
  if (spec.d == 0 || spec.m == 0 || spec.k == 0 || spec.L < 2)
    throw std::invalid_argument("named_scheme: invalid dimensions");
  const bool sparse = spec.setting == Setting::Sparse;
  const double d = sparse ? 1.0 : static_cast<double>(spec.d);
  const double k = sparse ? 1.0 : static_cast<double>(spec.k);
  const double m = static_cast<double>(spec.m);
  const double L = static_cast<double>(spec.L);
  const double L32 = L * std::sqrt(L);

  ScalingScheme s;
  s.lr_mode = LrMode::Fixed;
  s.sigma_in = 1.0 / std::sqrt(d);
  s.sigma_hid = std::sqrt(2.0 / m);
  switch (spec.name) {
    case SchemeName::FSC_MLP:
      s.sigma_out = std::sqrt(k * L) / m;
      s.eta_in = m / (L * L * d);
      s.eta_hid = 1.0 / (L * L);
      s.eta_out = k / (L * m);
      break;
    case SchemeName::MFmuP:
      s.sigma_out = std::sqrt(k) / m;
      s.eta_in = m / (L32 * d);
      s.eta_hid = 1.0 / L32;
      s.eta_out = k / (L32 * m);
      break;
    case SchemeName::NTK:
      s.sigma_out = 1.0 / std::sqrt(m);
      s.eta_in = 1.0 / (L * d);
      s.eta_hid = 1.0 / (L * m);
      s.eta_out = k / (L * m);
      break;
    case SchemeName::FSC_ResNet:
      if (!(spec.beta > 0.0)) throw std::invalid_argument("named_scheme: FSC_ResNet needs beta > 0");
      s.sigma_hid = 1.0 / std::sqrt(m);
      s.sigma_out = std::sqrt(k) / m;
      s.eta_in = m / (L * d);
      s.eta_hid = 1.0 / (spec.beta * spec.beta * L);
      s.eta_out = k / (L * m);
      break;
  }
  return s;
}

inline ScalingScheme named_scheme(SchemeName name, const ArchSpec& arch, Setting setting = Setting::Dense) {
  return named_scheme({name, setting, arch.d, arch.m, arch.k, arch.L, arch.beta});
}

// ---------------------------------------------------------------------------
// automatic calibration

struct FscAutoscaleResult {
  ScalingScheme scheme;
  double cos_theta = std::numeric_limits<double>::quiet_NaN();  // probe value of cos θ_{L-1}
  double fl_target = std::numeric_limits<double>::quiet_NaN();  // m·cos θ·‖b_{L-1}‖_rms after calibration
  std::size_t forward_rounds = 0;
  std::size_t output_rounds = 0;
};

inline constexpr std::size_t kAutoscaleRounds = 5;

namespace detail {

inline std::pair<double, double> hidden_rms_range(const ForwardTrace& t, std::size_t L) {
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (std::size_t v = 1; v < L; ++v) {
    const double r = rms_norm(t.f[v]);
    lo = std::min(lo, r);
    hi = std::max(hi, r);
  }
  return {lo, hi};
}

inline bool usable(double x) { return std::isfinite(x) && x > 0.0; }

}  // namespace detail

/// Calibrates a scheme on a probe input starting from the given initial stds:
/// (1) rescale σ_in and σ_hid until ‖f_v‖_rms ∈ [1/2, 2] for all hidden v;
/// (2) measure cos θ_{L-1} with a probe GD step under scale-invariant LRs;
/// (3) rescale σ_out until m·cos θ_{L-1}·‖b_{L-1}‖_rms ∈ [1/2, 2];
/// (4) return scale-invariant quadratic LRs with base 1.
inline FscAutoscaleResult fsc_autoscale(const ArchSpec& arch, Setting setting, std::uint64_t seed, double probe_dt,
                                        double init_sigma_in, double init_sigma_hid, double init_sigma_out) {
  arch.validate();
  if (!(probe_dt > 0.0)) throw std::invalid_argument("fsc_autoscale: probe_dt must be > 0");
  const std::size_t L = arch.L;
  const Mat x = as_batch(make_batch_input(setting, arch.d, arch.batch, derive_seed(seed, {1})), arch.d);
  const LossSpec loss = make_loss(setting, arch.k, derive_seed(seed, {2}));
  const std::uint64_t wseed = derive_seed(seed, {3});

  FscAutoscaleResult res;
  ScalingScheme& s = res.scheme;
  s.sigma_in = init_sigma_in;
  s.sigma_hid = init_sigma_hid;
  s.sigma_out = init_sigma_out;
  s.eta_in = s.eta_hid = s.eta_out = 1.0;
  s.lr_mode = LrMode::ScaleInvariantQuadratic;
  s.train_input = true;

  std::ostringstream log;
  bool ok = false;
  for (std::size_t round = 1; round <= kAutoscaleRounds && !ok; ++round) {
    res.forward_rounds = round;
    const Model model = init_model_with_stds(arch, s.sigma_in, s.sigma_hid, s.sigma_out, wseed);
    const ForwardTrace t = forward(model, x);
    const auto [lo, hi] = detail::hidden_rms_range(t, L);
    log << " round " << round << ": sigma_in=" << s.sigma_in << " sigma_hid=" << s.sigma_hid << " rms in [" << lo
        << ", " << hi << "];";
    if (!detail::usable(lo) || !std::isfinite(hi)) break;
    if (lo >= 0.5 && hi <= 2.0) {
      ok = true;
      break;
    }
    const double r1 = rms_norm(t.f[1]);
    s.sigma_in /= r1;
    if (L > 2) {
      // Geometric mean growth per hidden layer.
      const double growth = std::pow(rms_norm(t.f[L - 1]) / r1, 1.0 / static_cast<double>(L - 2));
      if (!detail::usable(growth)) break;
      s.sigma_hid /= growth;
    }
  }
  if (!ok) throw std::runtime_error("fsc_autoscale: forward scales did not converge:" + log.str());

  ok = false;
  for (std::size_t round = 1; round <= kAutoscaleRounds && !ok; ++round) {
    res.output_rounds = round;
    const Model model = init_model_with_stds(arch, s.sigma_in, s.sigma_hid, s.sigma_out, wseed);
    const ForwardTrace t = forward(model, x, loss);
    const BackwardTrace bt = backward(model, t, loss);
    const ResolvedLRs lrs = resolve_lrs(s, bt, L);
    const double b_rms = rms_norm(bt.b[L - 1]);
    if (contribution_sum(bt, lrs, 1, L - 1) == 0.0 || !detail::usable(b_rms)) {
      log << " output round " << round << ": zero gradients;";
      break;
    }
    const LayerDiagnostics diag = layer_diagnostics(model, loss, t, bt, lrs, L - 1, FiniteDifference{probe_dt});
    const double c = diag.cos_theta;
    const double target = static_cast<double>(arch.width(L - 1)) * c * b_rms;
    log << " output round " << round << ": sigma_out=" << s.sigma_out << " cos=" << c << " target=" << target << ";";
    if (!detail::usable(c) || !detail::usable(target)) break;
    res.cos_theta = c;
    res.fl_target = target;
    if (target >= 0.5 && target <= 2.0) {
      ok = true;
      break;
    }
    s.sigma_out /= target;
  }
  if (!ok) throw std::runtime_error("fsc_autoscale: output scale did not converge:" + log.str());
  return res;
}

/// Starts from fan-in stds 1/√d, 1/√m, 1/√m.
inline FscAutoscaleResult fsc_autoscale(const ArchSpec& arch, Setting setting, std::uint64_t seed,
                                        double probe_dt = kDefaultFdDt) {
  arch.validate();
  return fsc_autoscale(arch, setting, seed, probe_dt, 1.0 / std::sqrt(static_cast<double>(arch.d)),
                       1.0 / std::sqrt(static_cast<double>(arch.m)), 1.0 / std::sqrt(static_cast<double>(arch.m)));
}

// ---------------------------------------------------------------------------
// zero-output initialization

struct ZeroOutputInit {
  Model model;  // W_L = 0, other blocks as FSC_MLP
  LossSpec loss;
  Mat x;
  double eta_L0 = 0.0;  // √L/(m·‖b_L(0)‖²), one step of unit length
};

inline ZeroOutputInit zero_output_init(const ArchSpec& arch, Setting setting, std::uint64_t seed) {
  arch.validate();
  if (arch.kind != ArchKind::MLP) throw std::invalid_argument("zero_output_init: requires an MLP");
  const ScalingScheme fsc = named_scheme(SchemeName::FSC_MLP, arch, setting);
  ZeroOutputInit z;
  z.model = init_model_with_stds(arch, fsc.sigma_in, fsc.sigma_hid, 0.0, derive_seed(seed, {3}));
  z.x = as_batch(make_batch_input(setting, arch.d, arch.batch, derive_seed(seed, {1})), arch.d);
  z.loss = make_loss(setting, arch.k, derive_seed(seed, {2}));
  const double bL2 = loss_eval(z.loss, Mat(Mat::Zero(static_cast<Eigen::Index>(arch.k), z.x.cols()))).grad.squaredNorm();
  z.eta_L0 = std::sqrt(static_cast<double>(arch.L)) / (static_cast<double>(arch.m) * bL2);
  return z;
}

/// LRs (0, …, 0, η_L(0)) for the first step from a zero-output model.
inline ResolvedLRs zero_output_lrs(const ZeroOutputInit& z) {
  ResolvedLRs lrs;
  lrs.eta.assign(z.model.arch.L, 0.0);
  lrs.eta.back() = z.eta_L0;
  return lrs;
}

// ---------------------------------------------------------------------------
// property sweeps

enum class SweepFamily { VaryM, VaryL };

inline std::string_view to_string(SweepFamily f) { return f == SweepFamily::VaryM ? "vary_m" : "vary_L"; }

enum class Property { SP, FL, LD, BC, RFL, FS, BS };

inline constexpr std::array<Property, 7> kAllProperties = {Property::SP, Property::FL, Property::LD, Property::BC,
                                                          Property::RFL, Property::FS, Property::BS};

inline std::string_view to_string(Property p) {
  switch (p) {
    case Property::SP: return "SP";
    case Property::FL: return "FL";
    case Property::LD: return "LD";
    case Property::BC: return "BC";
    case Property::RFL: return "RFL";
    case Property::FS: return "FS";
    case Property::BS: return "BS";
  }
  return "?";
}

/// Θ(1): |exponent| ≤ band. O(1): exponent ≤ band.
enum class BoundKind { Theta, BigO };

inline std::string_view to_string(BoundKind b) { return b == BoundKind::Theta ? "Theta" : "O"; }

inline BoundKind property_bound(Property p) {
  switch (p) {
    case Property::BC:
    case Property::FS:
    case Property::BS: return BoundKind::BigO;
    default: return BoundKind::Theta;
  }
}

/// Measured quantities per (grid point, seed). Names match the CSV column.
struct PropertyQuantity {
  std::string_view name;
  Property property;
};

inline constexpr std::array<PropertyQuantity, 8> kPropertyQuantities = {{
    {"f_rms_min", Property::SP},   // min_v ‖f_v‖_rms over hidden layers
    {"f_rms_max", Property::SP},   // max_v ‖f_v‖_rms
    {"f_dot_rms", Property::FL},   // ‖ḟ_{L-1}‖_rms
    {"loss_decay", Property::LD},  // −L̇ = Σ C_ℓ
    {"contrib_ratio", Property::BC},  // max C_ℓ / min C_ℓ over trained blocks
    {"rel_feature_speed", Property::RFL},  // ‖ḟ_{L-1}‖/‖f_{L-1}‖
    {"fwd_stability", Property::FS},  // max_ℓ ‖ġ_ℓ‖/‖g_ℓ‖
    {"bwd_stability", Property::BS},  // max_ℓ ‖ḃ_ℓ‖/‖b_ℓ‖
}};

struct PropertyMeasurement {
  std::size_t m = 0, L = 0, seed_index = 0;
  std::uint64_t seed = 0;
  double beta = 1.0;
  std::array<double, kPropertyQuantities.size()> values{};
  double c_in = 0.0, c_hid = 0.0, c_out = 0.0;
};

struct QuantityFit {
  std::string name;
  Property property = Property::SP;
  std::vector<double> medians;  // per grid point
  double exponent = std::numeric_limits<double>::quiet_NaN();
  double r_squared = std::numeric_limits<double>::quiet_NaN();
  bool degenerate = false;
};

struct PropertySummary {
  Property property = Property::SP;
  BoundKind bound = BoundKind::Theta;
  double exponent = std::numeric_limits<double>::quiet_NaN();  // worst quantity for this property
  double r_squared = std::numeric_limits<double>::quiet_NaN();
  std::string quantity;
  bool pass = false;
};

struct PropertyBands {
  double exponent = 0.15;
  double ratio = 4.0;  // recorded for grid-ratio checks elsewhere
};

struct PropertyReport {
  std::string scheme;
  SweepFamily family = SweepFamily::VaryM;
  std::vector<std::size_t> grid;
  PropertyBands bands;
  std::vector<PropertyMeasurement> rows;
  std::vector<QuantityFit> fits;
  std::vector<PropertySummary> summary;

  const PropertySummary& at(Property p) const {
    for (const auto& s : summary)
      if (s.property == p) return s;
    throw std::out_of_range("PropertyReport: property missing");
  }
  const QuantityFit& fit(std::string_view name) const {
    for (const auto& f : fits)
      if (f.name == name) return f;
    throw std::out_of_range("PropertyReport: quantity missing");
  }
};

using SchemeSource = std::function<ScalingScheme(const ArchSpec&)>;

struct PropertySweepConfig {
  std::string scheme_name;
  SchemeSource scheme;
  ArchKind kind = ArchKind::MLP;
  Activation activation = Activation::ReLU;
  std::function<double(std::size_t)> beta_rule;  // ResNet β(L); defaults to 1/√L
  Setting setting = Setting::Dense;
  std::size_t d = 10, k = 1;
  SweepFamily family = SweepFamily::VaryM;
  std::vector<std::size_t> grid;
  std::size_t fixed_m = 1024, fixed_L = 4;
  std::size_t seeds = 5;
  std::uint64_t base_seed = 0;
  std::size_t workers = 1;
  PropertyBands bands;
};

inline ArchSpec sweep_arch(const PropertySweepConfig& cfg, std::size_t m, std::size_t L) {
  if (cfg.kind == ArchKind::MLP) return ArchSpec::mlp(cfg.d, m, cfg.k, L, cfg.activation);
  const double beta = cfg.beta_rule ? cfg.beta_rule(L) : 1.0 / std::sqrt(static_cast<double>(L));
  return ArchSpec::resnet(cfg.d, m, cfg.k, L, beta, cfg.activation);
}

/// All property quantities for one network at initialization, Exact mode.
inline PropertyMeasurement measure_properties(const ArchSpec& arch, const ScalingScheme& scheme, Setting setting,
                                              std::uint64_t seed) {
  const std::size_t L = arch.L;
  const Model model = init_model(arch, scheme, derive_seed(seed, {3}));
  const Mat x = as_batch(make_batch_input(setting, arch.d, arch.batch, derive_seed(seed, {1})), arch.d);
  const LossSpec loss = make_loss(setting, arch.k, derive_seed(seed, {2}));
  const ForwardTrace t = forward(model, x, loss);
  const BackwardTrace bt = backward(model, t, loss);
  const ResolvedLRs lrs = resolve_lrs(scheme, bt, L);
  const Velocities vel = velocities(model, loss, t, bt, lrs);

  PropertyMeasurement pm;
  pm.m = arch.m;
  pm.L = L;
  pm.seed = seed;
  pm.beta = arch.beta;
  const auto [lo, hi] = detail::hidden_rms_range(t, L);
  auto& v = pm.values;
  v[0] = lo;
  v[1] = hi;
  v[2] = rms_norm(vel.f_dot[L - 1]);
  double c_max = 0.0, c_min = std::numeric_limits<double>::infinity();
  for (std::size_t ell = 1; ell <= L; ++ell) {
    const double c = lrs.at(ell) * bt.grad_norm(ell) * bt.grad_norm(ell);
    if (ell == 1) pm.c_in = c;
    else if (ell == L) pm.c_out = c;
    else pm.c_hid += c;
    if (lrs.at(ell) == 0.0) continue;
    c_max = std::max(c_max, c);
    c_min = std::min(c_min, c);
  }
  v[3] = pm.c_in + pm.c_hid + pm.c_out;
  v[4] = c_min > 0.0 && std::isfinite(c_min) ? c_max / c_min : std::numeric_limits<double>::quiet_NaN();
  v[5] = vel.f_dot[L - 1].norm() / t.f[L - 1].norm();
  double fs = 0.0, bs = 0.0;
  for (std::size_t ell = 1; ell < L; ++ell) {
    const Mat g_dot = vel.f_dot[ell].cwiseProduct(act_mask(arch.activation, t.f[ell]));
    fs = std::max(fs, g_dot.norm() / t.g[ell].norm());
    bs = std::max(bs, vel.b_dot[ell].norm() / bt.b[ell].norm());
  }
  v[6] = fs;
  v[7] = bs;
  return pm;
}

inline PropertyReport property_sweep(const PropertySweepConfig& cfg) {
  if (cfg.grid.size() < 3) throw std::invalid_argument("property_sweep: grid needs at least 3 points");
  if (cfg.seeds == 0) throw std::invalid_argument("property_sweep: seeds must be >= 1");
  if (!cfg.scheme) throw std::invalid_argument("property_sweep: missing scheme source");
  const std::size_t G = cfg.grid.size(), S = cfg.seeds;

  PropertyReport rep;
  rep.scheme = cfg.scheme_name;
  rep.family = cfg.family;
  rep.grid = cfg.grid;
  rep.bands = cfg.bands;
  rep.rows = parallel_map<PropertyMeasurement>(G * S, cfg.workers, [&](std::size_t task) {
    const std::size_t gi = task / S, s = task % S;
    const std::size_t m = cfg.family == SweepFamily::VaryM ? cfg.grid[gi] : cfg.fixed_m;
    const std::size_t L = cfg.family == SweepFamily::VaryL ? cfg.grid[gi] : cfg.fixed_L;
    const ArchSpec arch = sweep_arch(cfg, m, L);
    PropertyMeasurement pm = measure_properties(arch, cfg.scheme(arch), cfg.setting, derive_seed(cfg.base_seed, {m, L, s}));
    pm.seed_index = s;
    return pm;
  });

  std::vector<double> xs(cfg.grid.begin(), cfg.grid.end());
  for (std::size_t q = 0; q < kPropertyQuantities.size(); ++q) {
    QuantityFit fit;
    fit.name = std::string(kPropertyQuantities[q].name);
    fit.property = kPropertyQuantities[q].property;
    for (std::size_t gi = 0; gi < G; ++gi) {
      std::vector<double> vals;
      for (std::size_t s = 0; s < S; ++s) vals.push_back(rep.rows[gi * S + s].values[q]);
      const bool bad = std::any_of(vals.begin(), vals.end(), [](double x) { return !detail::usable(x); });
      fit.medians.push_back(bad ? std::numeric_limits<double>::quiet_NaN() : median(vals));
      fit.degenerate = fit.degenerate || bad;
    }
    if (!fit.degenerate) {
      const PowerLawFit pl = fit_power_law(xs, fit.medians);
      fit.exponent = pl.exponent;
      fit.r_squared = pl.r_squared;
    }
    rep.fits.push_back(std::move(fit));
  }

  for (Property p : kAllProperties) {
    PropertySummary sum;
    sum.property = p;
    sum.bound = property_bound(p);
    bool pass = true;
    double worst = -1.0;
    for (const auto& f : rep.fits) {
      if (f.property != p) continue;
      const double e = f.exponent;
      const bool ok = !f.degenerate &&
                      (sum.bound == BoundKind::Theta ? std::abs(e) <= cfg.bands.exponent : e <= cfg.bands.exponent);
      pass = pass && ok;
      const double badness = f.degenerate ? std::numeric_limits<double>::infinity() : std::abs(e);
      if (badness > worst) {
        worst = badness;
        sum.exponent = e;
        sum.r_squared = f.r_squared;
        sum.quantity = f.name;
      }
    }
    sum.pass = pass;
    rep.summary.push_back(sum);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// invariances

/// Runs T GD steps from θ₀ and from σ⊙θ₀ (blockwise) with LRs resolved by
/// `lr_scheme` at every step, and returns the largest relative deviation
/// ‖w̃_ℓ(t) − σ_ℓw_ℓ(t)‖/‖σ_ℓw_ℓ(t)‖. Scale-invariant quadratic LRs make this
/// zero up to rounding; Fixed LRs serve as the negative control.
inline double rescaling_invariance(const Model& model, const LossSpec& loss, const Mat& x,
                                   const std::vector<double>& sigma, std::size_t T, double dt,
                                   const ScalingScheme& lr_scheme) {
  model.check_shapes();
  const std::size_t L = model.arch.L;
  if (sigma.size() != L) throw std::invalid_argument("rescaling_invariance: need one factor per block");
  double log_prod = 0.0;
  for (double s : sigma) {
    if (!(s > 0.0) || !std::isfinite(s)) throw std::invalid_argument("rescaling_invariance: factors must be > 0");
    log_prod += std::log(s);
  }
  if (std::abs(std::expm1(log_prod)) > 1e-12) throw std::invalid_argument("rescaling_invariance: product of factors must be 1");

  Model a = model, b = model;
  for (std::size_t ell = 1; ell <= L; ++ell) b.W(ell) *= sigma[ell - 1];
  double dev = 0.0;
  for (std::size_t step = 0; step < T; ++step) {
    const ForwardTrace ta = forward(a, x, loss), tb = forward(b, x, loss);
    const BackwardTrace ga = backward(a, ta, loss), gb = backward(b, tb, loss);
    a = gd_step(a, ga, resolve_lrs(lr_scheme, ga, L), dt);
    b = gd_step(b, gb, resolve_lrs(lr_scheme, gb, L), dt);
    for (std::size_t ell = 1; ell <= L; ++ell) {
      const Mat ref = sigma[ell - 1] * a.W(ell);
      const double denom = ref.norm();
      const double diff = (b.W(ell) - ref).norm();
      dev = std::max(dev, denom > 0.0 ? diff / denom : diff);
    }
  }
  return dev;
}

/// Gradient of an objective with respect to each parameter block.
using BlockGradient = std::function<std::vector<Mat>(const std::vector<Mat>&)>;
/// Learning rate for block ℓ (1-based) given its gradient.
using LrRule = std::function<double(std::size_t, const Mat&)>;

inline LrRule quadratic_lr_rule(double c) {
  return [c](std::size_t, const Mat& g) {
    const double n2 = g.squaredNorm();
    return n2 > 0.0 ? c / n2 : 0.0;
  };
}

inline LrRule constant_lr_rule(double c) {
  return [c](std::size_t, const Mat&) { return c; };
}

/// Network loss as a function of its weight blocks.
inline BlockGradient network_objective(const ArchSpec& arch, const LossSpec& loss, const Mat& x) {
  return [arch, loss, x](const std::vector<Mat>& w) {
    const Model model{arch, w};
    const ForwardTrace t = forward(model, x, loss);
    return backward(model, t, loss).grads;
  };
}

/// One GD step on f from x₀ versus one step on g(y) = f(α⊙y) from y₀ = x₀/α.
/// Returns max_ℓ ‖x′_ℓ − α_ℓ y′_ℓ‖/‖x′_ℓ‖.
inline double reparam_invariance(const BlockGradient& grad_f, const std::vector<Mat>& x0,
                                 const std::vector<double>& alpha, const LrRule& rule, double dt = 1.0) {
  const std::size_t B = x0.size();
  if (alpha.size() != B) throw std::invalid_argument("reparam_invariance: need one alpha per block");
  for (double a : alpha)
    if (!(a > 0.0) || !std::isfinite(a)) throw std::invalid_argument("reparam_invariance: alpha entries must be > 0");

  const std::vector<Mat> gx = grad_f(x0);
  std::vector<Mat> y0(B);
  for (std::size_t i = 0; i < B; ++i) y0[i] = x0[i] / alpha[i];
  // ∇g(y) = α⊙∇f(α⊙y), evaluated at α⊙y₀.
  std::vector<Mat> ay0(B);
  for (std::size_t i = 0; i < B; ++i) ay0[i] = alpha[i] * y0[i];
  std::vector<Mat> gy = grad_f(ay0);
  for (std::size_t i = 0; i < B; ++i) gy[i] *= alpha[i];

  double dev = 0.0;
  for (std::size_t i = 0; i < B; ++i) {
    const Mat x1 = x0[i] - dt * rule(i + 1, gx[i]) * gx[i];
    const Mat y1 = y0[i] - dt * rule(i + 1, gy[i]) * gy[i];
    const Mat diff = x1 - alpha[i] * y1;
    const double denom = x1.norm();
    dev = std::max(dev, denom > 0.0 ? diff.norm() / denom : diff.norm());
  }
  return dev;
}

}  // namespace featspeed
