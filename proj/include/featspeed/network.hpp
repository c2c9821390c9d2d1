#pragma once
// Architectures, scaling schemes, initialization, inputs/losses and the
// forward pass for ReLU/linear MLPs and branch-scaled ResNets.
//
// Batches are handled by storing each layer's features as an m_ℓ × n matrix;
// its column-major storage is the concatenation of the n per-sample vectors.

#include "featspeed/numerics.hpp"

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace featspeed {

enum class ArchKind { MLP, ResNet };
enum class Activation { ReLU, Linear };
enum class Setting { Dense, Sparse };
enum class LossKind { LinearLoss, RmsLoss };
enum class LrMode { Fixed, ScaleInvariantQuadratic, ScaleInvariantNormalized };

inline std::string_view to_string(ArchKind k) { return k == ArchKind::MLP ? "MLP" : "ResNet"; }
inline std::string_view to_string(Activation a) { return a == Activation::ReLU ? "ReLU" : "Linear"; }
inline std::string_view to_string(Setting s) { return s == Setting::Dense ? "Dense" : "Sparse"; }
inline std::string_view to_string(LrMode m) {
  switch (m) {
    case LrMode::Fixed: return "Fixed";
    case LrMode::ScaleInvariantQuadratic: return "ScaleInvariantQuadratic";
    case LrMode::ScaleInvariantNormalized: return "ScaleInvariantNormalized";
  }
  return "?";
}

inline Setting parse_setting(std::string_view s) {
  if (s == "Dense" || s == "dense") return Setting::Dense;
  if (s == "Sparse" || s == "sparse") return Setting::Sparse;
  throw std::invalid_argument("unknown setting: " + std::string(s));
}

inline constexpr std::size_t kDefaultMaxElements = 100'000'000;

struct ArchSpec {
  ArchKind kind = ArchKind::MLP;
  std::size_t d = 1;  // input width m_0
  std::size_t m = 1;  // hidden width m_1 = ... = m_{L-1}
  std::size_t k = 1;  // output width m_L
  std::size_t L = 2;
  double beta = 1.0;  // ResNet branch scale; 1 for MLPs
  Activation activation = Activation::ReLU;
  std::size_t batch = 1;

  static ArchSpec mlp(std::size_t d, std::size_t m, std::size_t k, std::size_t L,
                      Activation act = Activation::ReLU, std::size_t batch = 1) {
    return {ArchKind::MLP, d, m, k, L, 1.0, act, batch};
  }
  static ArchSpec resnet(std::size_t d, std::size_t m, std::size_t k, std::size_t L, double beta,
                         Activation act = Activation::Linear, std::size_t batch = 1) {
    return {ArchKind::ResNet, d, m, k, L, beta, act, batch};
  }

  void validate() const {
    if (d == 0 || m == 0 || k == 0 || batch == 0) throw std::invalid_argument("ArchSpec: widths and batch must be >= 1");
    if (L < 2) throw std::invalid_argument("ArchSpec: depth L must be >= 2");
    if (!(beta >= 0.0 && beta <= 1.0)) throw std::invalid_argument("ArchSpec: beta must lie in [0,1]");
    if (kind == ArchKind::MLP && beta != 1.0) throw std::invalid_argument("ArchSpec: MLP requires beta = 1");
  }

  /// m_ℓ for ℓ ∈ [0:L].
  std::size_t width(std::size_t ell) const {
    if (ell == 0) return d;
    if (ell == L) return k;
    return m;
  }

  /// Skip-path coefficient sqrt(1 - β²).
  double skip() const { return std::sqrt(std::max(0.0, 1.0 - beta * beta)); }
};

/// Per-block init stds and base learning rates (input, hidden, output).
struct ScalingScheme {
  double sigma_in = 1.0, sigma_hid = 1.0, sigma_out = 1.0;
  double eta_in = 1.0, eta_hid = 1.0, eta_out = 1.0;
  LrMode lr_mode = LrMode::Fixed;
  bool train_input = true;

  void validate() const {
    if (!(sigma_in > 0.0 && sigma_hid > 0.0 && sigma_out > 0.0))
      throw std::invalid_argument("ScalingScheme: initialization stds must be > 0");
    if (!(eta_in >= 0.0 && eta_hid >= 0.0 && eta_out >= 0.0))
      throw std::invalid_argument("ScalingScheme: learning rates must be >= 0");
  }

  double sigma(std::size_t ell, std::size_t L) const {
    return ell == 1 ? sigma_in : (ell == L ? sigma_out : sigma_hid);
  }
  double eta(std::size_t ell, std::size_t L) const {
    return ell == 1 ? eta_in : (ell == L ? eta_out : eta_hid);
  }
};

struct Model {
  ArchSpec arch;
  std::vector<Mat> weights;  // weights[ℓ-1] = W_ℓ, shape m_ℓ × m_{ℓ-1}

  const Mat& W(std::size_t ell) const { return weights.at(ell - 1); }
  Mat& W(std::size_t ell) { return weights.at(ell - 1); }

  void check_shapes() const {
    arch.validate();
    if (weights.size() != arch.L) throw std::invalid_argument("Model: expected L weight matrices");
    for (std::size_t ell = 1; ell <= arch.L; ++ell) {
      const Mat& w = W(ell);
      if (static_cast<std::size_t>(w.rows()) != arch.width(ell) ||
          static_cast<std::size_t>(w.cols()) != arch.width(ell - 1))
        throw std::invalid_argument("Model: weight shape mismatch at layer " + std::to_string(ell));
    }
  }
};

struct LossSpec {
  LossKind kind = LossKind::LinearLoss;
  Vec c;  // LinearLoss covector
  Vec y;  // RmsLoss target

  std::size_t k() const { return static_cast<std::size_t>(kind == LossKind::LinearLoss ? c.size() : y.size()); }

  static LossSpec linear(Vec c) { return {LossKind::LinearLoss, std::move(c), Vec()}; }
  static LossSpec rms(Vec y) { return {LossKind::RmsLoss, Vec(), std::move(y)}; }
};

struct ForwardTrace {
  std::vector<Mat> f;  // f[ℓ], ℓ ∈ [0:L]; f[0] = x
  std::vector<Mat> g;  // g[ℓ] = φ(f[ℓ]) for ℓ ∈ [1:L-1]; g[0] = x
  double loss_value = std::numeric_limits<double>::quiet_NaN();

  std::size_t depth() const { return f.size() - 1; }
  std::size_t batch() const { return static_cast<std::size_t>(f.front().cols()); }
};

// ---------------------------------------------------------------------------
// activations

inline double act(Activation a, double u) { return a == Activation::ReLU ? (u > 0.0 ? u : 0.0) : u; }

/// Selection derivative; φ'(0) = 0 for ReLU.
inline double act_deriv(Activation a, double u) { return a == Activation::ReLU ? (u > 0.0 ? 1.0 : 0.0) : 1.0; }

inline Mat apply_act(Activation a, const Mat& u) {
  if (a == Activation::Linear) return u;
  return u.cwiseMax(0.0);
}

inline Mat act_mask(Activation a, const Mat& u) {
  if (a == Activation::Linear) return Mat::Ones(u.rows(), u.cols());
  return (u.array() > 0.0).cast<double>().matrix();
}

// ---------------------------------------------------------------------------
// inputs and losses

/// Dense: Gaussian direction with ‖x‖₂ = √d. Sparse: a random one-hot vector.
inline Vec make_input(Setting setting, std::size_t d, std::uint64_t seed) {
  if (d == 0) throw std::invalid_argument("make_input: d must be >= 1");
  Vec x = Vec::Zero(static_cast<Eigen::Index>(d));
  if (setting == Setting::Sparse) {
    x(static_cast<Eigen::Index>(KeyedStream(seed).index_below(0, d))) = 1.0;
    return x;
  }
  x = gaussian_vector(d, 1.0, seed);
  return x * (std::sqrt(static_cast<double>(d)) / x.norm());
}

/// n inputs concatenated, each drawn from its own derived stream.
inline Vec make_batch_input(Setting setting, std::size_t d, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("make_batch_input: batch must be >= 1");
  if (n == 1) return make_input(setting, d, seed);
  Vec x(static_cast<Eigen::Index>(d * n));
  for (std::size_t i = 0; i < n; ++i)
    x.segment(static_cast<Eigen::Index>(i * d), static_cast<Eigen::Index>(d)) =
        make_input(setting, d, derive_seed(seed, {i}));
  return x;
}

/// Linear loss with ‖c‖₂ = 1/√k (Dense) or 1 (Sparse).
inline LossSpec make_loss(Setting setting, std::size_t k, std::uint64_t seed) {
  if (k == 0) throw std::invalid_argument("make_loss: k must be >= 1");
  Vec c = gaussian_vector(k, 1.0, seed);
  const double target = setting == Setting::Dense ? 1.0 / std::sqrt(static_cast<double>(k)) : 1.0;
  return LossSpec::linear(c * (target / c.norm()));
}

struct LossEval {
  double value = 0.0;
  Mat grad;  // k × n
};

/// LinearLoss: Σ_i cᵀf_i. RmsLoss: (1/n) Σ_i ‖f_i − y‖²/k.
inline LossEval loss_eval(const LossSpec& loss, const Mat& fL) {
  const auto k = static_cast<Eigen::Index>(loss.k());
  if (fL.rows() != k || fL.cols() == 0) throw std::invalid_argument("loss_eval: length mismatch");
  const double n = static_cast<double>(fL.cols());
  LossEval out;
  if (loss.kind == LossKind::LinearLoss) {
    out.grad = loss.c.replicate(1, fL.cols());
    out.value = (loss.c.transpose() * fL).sum();
  } else {
    const Mat diff = fL.colwise() - loss.y;
    out.value = diff.squaredNorm() / (n * static_cast<double>(k));
    out.grad = diff * (2.0 / (n * static_cast<double>(k)));
  }
  return out;
}

inline LossEval loss_eval(const LossSpec& loss, const Vec& fL_flat) {
  const auto k = static_cast<Eigen::Index>(loss.k());
  if (k == 0 || fL_flat.size() % k != 0) throw std::invalid_argument("loss_eval: length mismatch");
  const Mat fL = Eigen::Map<const Mat>(fL_flat.data(), k, fL_flat.size() / k);
  return loss_eval(loss, fL);
}

/// Second-order term fᵀ ∇²loss[f] ḟ entering the backward speed identity.
inline double loss_hessian_form(const LossSpec& loss, const Mat& fL, const Mat& fL_dot) {
  if (loss.kind == LossKind::LinearLoss) return 0.0;
  const double n = static_cast<double>(fL.cols());
  return 2.0 / (n * static_cast<double>(loss.k())) * fL.cwiseProduct(fL_dot).sum();
}

/// ∇²loss[f] applied to ḟ.
inline Mat loss_hessian_apply(const LossSpec& loss, const Mat& fL_dot) {
  if (loss.kind == LossKind::LinearLoss) return Mat::Zero(fL_dot.rows(), fL_dot.cols());
  const double n = static_cast<double>(fL_dot.cols());
  return fL_dot * (2.0 / (n * static_cast<double>(loss.k())));
}

// ---------------------------------------------------------------------------
// initialization and forward pass

/// Gaussian initialization with the given per-block stds; stds may be zero here.
inline Model init_model_with_stds(const ArchSpec& arch, double s_in, double s_hid, double s_out,
                                  std::uint64_t seed, std::size_t max_elements = kDefaultMaxElements) {
  arch.validate();
  Model model{arch, {}};
  model.weights.reserve(arch.L);
  for (std::size_t ell = 1; ell <= arch.L; ++ell) {
    const std::size_t rows = arch.width(ell), cols = arch.width(ell - 1);
    if (cols != 0 && rows > max_elements / cols)
      throw std::invalid_argument("init_model: layer " + std::to_string(ell) + " exceeds max elements");
    const double s = ell == 1 ? s_in : (ell == arch.L ? s_out : s_hid);
    model.weights.push_back(gaussian_matrix(rows, cols, s, derive_seed(seed, {ell})));
  }
  return model;
}

inline Model init_model(const ArchSpec& arch, const ScalingScheme& scheme, std::uint64_t seed,
                        std::size_t max_elements = kDefaultMaxElements) {
  scheme.validate();
  return init_model_with_stds(arch, scheme.sigma_in, scheme.sigma_hid, scheme.sigma_out, seed, max_elements);
}

inline Mat as_batch(const Vec& x, std::size_t rows) {
  const auto r = static_cast<Eigen::Index>(rows);
  if (r == 0 || x.size() == 0 || x.size() % r != 0) throw std::invalid_argument("forward: input length mismatch");
  return Eigen::Map<const Mat>(x.data(), r, x.size() / r);
}

inline ForwardTrace forward(const Model& model, const Mat& x) {
  model.check_shapes();
  const ArchSpec& a = model.arch;
  if (static_cast<std::size_t>(x.rows()) != a.d || x.cols() == 0)
    throw std::invalid_argument("forward: input length mismatch");
  const std::size_t L = a.L;
  ForwardTrace t;
  t.f.resize(L + 1);
  t.g.resize(L);
  t.f[0] = x;
  t.g[0] = x;
  if (a.kind == ArchKind::MLP) {
    for (std::size_t ell = 1; ell < L; ++ell) {
      t.f[ell] = model.W(ell) * t.g[ell - 1];
      t.g[ell] = apply_act(a.activation, t.f[ell]);
    }
    t.f[L] = model.W(L) * t.g[L - 1];
  } else {
    const double skip = a.skip();
    t.f[1] = model.W(1) * x;
    t.g[1] = apply_act(a.activation, t.f[1]);
    for (std::size_t ell = 2; ell < L; ++ell) {
      t.f[ell] = skip * t.f[ell - 1] + a.beta * (model.W(ell) * t.g[ell - 1]);
      t.g[ell] = apply_act(a.activation, t.f[ell]);
    }
    t.f[L] = model.W(L) * t.f[L - 1];
  }
  return t;
}

inline ForwardTrace forward(const Model& model, const Vec& x) { return forward(model, as_batch(x, model.arch.d)); }

inline ForwardTrace forward(const Model& model, const Mat& x, const LossSpec& loss) {
  ForwardTrace t = forward(model, x);
  t.loss_value = loss_eval(loss, t.f.back()).value;
  return t;
}

inline ForwardTrace forward(const Model& model, const Vec& x, const LossSpec& loss) {
  return forward(model, as_batch(x, model.arch.d), loss);
}

}  // namespace featspeed
