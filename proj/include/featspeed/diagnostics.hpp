#pragma once
// Backward-feature angles, the backward-to-feature kernel (BFK) and its
// backward analogue (FBK), spectral moments, trace estimation, and the
// per-layer feature/backward speed identities.

#include "featspeed/backprop.hpp"

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <utility>
#include <variant>
#include <vector>

namespace featspeed {

inline constexpr std::size_t kDefaultMaxKernel = 4096;
inline constexpr double kDefaultFdDt = 1e-3;

// ---------------------------------------------------------------------------
// exact instantaneous velocities

/// Time derivatives of the forward and backward passes under ẇ_ℓ = −η_ℓ∇_ℓL.
struct Velocities {
  std::vector<Mat> f_dot;  // ℓ ∈ [0:L]
  std::vector<Mat> b_dot;  // ℓ ∈ [1:L]
};

/// Tangent propagation of the weight velocity through the forward recursion
/// and the (differentiated) backward recursion. ReLU second derivatives are
/// zero almost everywhere and are dropped.
inline Velocities velocities(const Model& model, const LossSpec& loss, const ForwardTrace& trace,
                             const BackwardTrace& bt, const ResolvedLRs& lrs) {
  check_trace(model, trace);
  const ArchSpec& a = model.arch;
  const std::size_t L = a.L;
  const double skip = a.skip();
  // Ẇ_ℓ = −η_ℓ∇_ℓ is never materialized; products are rescaled instead.
  auto eta = [&](std::size_t ell) { return lrs.at(ell); };

  std::vector<Mat> masks(L);
  for (std::size_t ell = 1; ell < L; ++ell) masks[ell] = act_mask(a.activation, trace.f[ell]);

  Velocities v;
  v.f_dot.resize(L + 1);
  v.b_dot.resize(L + 1);
  v.f_dot[0] = Mat::Zero(trace.f[0].rows(), trace.f[0].cols());

  if (a.kind == ArchKind::MLP) {
    Mat g_dot = v.f_dot[0];
    for (std::size_t ell = 1; ell <= L; ++ell) {
      v.f_dot[ell] = model.W(ell) * g_dot - eta(ell) * (bt.grad(ell) * trace.g[ell - 1]);
      if (ell < L) g_dot = v.f_dot[ell].cwiseProduct(masks[ell]);
    }
  } else {
    v.f_dot[1] = -eta(1) * (bt.grad(1) * trace.f[0]);
    for (std::size_t ell = 2; ell < L; ++ell) {
      v.f_dot[ell] = skip * v.f_dot[ell - 1] +
                     a.beta * (model.W(ell) * v.f_dot[ell - 1].cwiseProduct(masks[ell - 1]) - eta(ell) * (bt.grad(ell) * trace.g[ell - 1]));
    }
    v.f_dot[L] = model.W(L) * v.f_dot[L - 1] - eta(L) * (bt.grad(L) * trace.f[L - 1]);
  }

  v.b_dot[L] = loss_hessian_apply(loss, v.f_dot[L]);
  if (a.kind == ArchKind::MLP) {
    for (std::size_t ell = L - 1; ell >= 1; --ell) {
      const Mat z_dot = model.W(ell + 1).transpose() * v.b_dot[ell + 1] - eta(ell + 1) * (bt.grad(ell + 1).transpose() * bt.b[ell + 1]);
      v.b_dot[ell] = z_dot.cwiseProduct(masks[ell]);
    }
  } else {
    v.b_dot[L - 1] = model.W(L).transpose() * v.b_dot[L] - eta(L) * (bt.grad(L).transpose() * bt.b[L]);
    for (std::size_t ell = L - 1; ell >= 2; --ell) {
      const Mat back = model.W(ell).transpose() * v.b_dot[ell] - eta(ell) * (bt.grad(ell).transpose() * bt.b[ell]);
      v.b_dot[ell - 1] = skip * v.b_dot[ell] + a.beta * back.cwiseProduct(masks[ell - 1]);
    }
  }
  return v;
}

// ---------------------------------------------------------------------------
// kernels

/// K_v = Σ_{ℓ≤v} η_ℓ (∂f_v/∂w_ℓ)(∂f_v/∂w_ℓ)ᵀ, assembled from the rank
/// structure ∂f_v/∂W_ℓ[Δ] = s_ℓ P_ℓ Δ h_ℓ with P_ℓ = ∂f_v/∂f_ℓ. For a batch the
/// (i, j) sample block is Σ_ℓ η_ℓ s_ℓ² ⟨h_ℓ⁽ⁱ⁾, h_ℓ⁽ʲ⁾⟩ P_ℓ⁽ⁱ⁾ P_ℓ⁽ʲ⁾ᵀ.
inline Mat assemble_bfk(const Model& model, const ForwardTrace& trace, const ResolvedLRs& lrs, std::size_t v,
                        std::size_t max_kernel = kDefaultMaxKernel) {
  check_trace(model, trace);
  const ArchSpec& a = model.arch;
  if (v < 1 || v > a.L) throw std::invalid_argument("assemble_bfk: layer out of range");
  const std::size_t n = trace.batch();
  const std::size_t mv = a.width(v);
  if (n * mv > max_kernel)
    throw std::invalid_argument("assemble_bfk: kernel size exceeds cap; use the Hutchinson/velocity path instead");
  const auto mvi = static_cast<Eigen::Index>(mv);

  Mat K = Mat::Zero(static_cast<Eigen::Index>(n * mv), static_cast<Eigen::Index>(n * mv));
  // P[i] holds ∂f_v/∂f_ℓ for sample i, walked from ℓ = v downwards.
  std::vector<Mat> P(n, Mat::Identity(mvi, mvi));
  for (std::size_t ell = v; ell >= 1; --ell) {
    if (ell < v)
      for (std::size_t i = 0; i < n; ++i) P[i] = P[i] * step_jacobian(model, trace, ell + 1, static_cast<Eigen::Index>(i));
    const double eta = lrs.at(ell);
    if (eta != 0.0) {
      const BlockInput in = block_input(model, trace, ell);
      const Mat gram = in.h->transpose() * *in.h;
      const double w = eta * in.scale * in.scale;
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) {
          const double gij = gram(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
          if (gij == 0.0) continue;
          auto blk = K.block(static_cast<Eigen::Index>(i * mv), static_cast<Eigen::Index>(j * mv), mvi, mvi);
          if (i == j)
            blk.noalias() += (w * gij) * (P[i] * P[i].transpose());
          else
            blk.noalias() += (w * gij) * (P[i] * P[j].transpose());
        }
      }
    }
  }
  // Fill the lower sample blocks by symmetry.
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j)
      K.block(static_cast<Eigen::Index>(i * mv), static_cast<Eigen::Index>(j * mv), mvi, mvi) =
          K.block(static_cast<Eigen::Index>(j * mv), static_cast<Eigen::Index>(i * mv), mvi, mvi).transpose();
  return K;
}

/// K̃_v = Σ_{ℓ>v} η_ℓ‖b_ℓ‖² (∂g_{ℓ-1}/∂f_v)ᵀ(∂g_{ℓ-1}/∂f_v) for a single-sample
/// MLP with a linear loss. The backward pass moves as ḃ_v = −K̃_v f_v.
inline Mat assemble_fbk(const Model& model, const ForwardTrace& trace, const BackwardTrace& bt,
                        const ResolvedLRs& lrs, const LossSpec& loss, std::size_t v,
                        std::size_t max_kernel = kDefaultMaxKernel) {
  check_trace(model, trace);
  const ArchSpec& a = model.arch;
  if (loss.kind != LossKind::LinearLoss) throw std::invalid_argument("assemble_fbk: requires a linear loss");
  if (a.kind != ArchKind::MLP) throw std::invalid_argument("assemble_fbk: requires an MLP");
  if (trace.batch() != 1) throw std::invalid_argument("assemble_fbk: requires a single sample");
  if (v < 1 || v > a.L) throw std::invalid_argument("assemble_fbk: layer out of range");
  const std::size_t mv = a.width(v);
  if (mv > max_kernel) throw std::invalid_argument("assemble_fbk: kernel size exceeds cap");
  const auto mvi = static_cast<Eigen::Index>(mv);
  Mat K = Mat::Zero(mvi, mvi);
  if (v == a.L) return K;
  // Q = ∂g_{ℓ-1}/∂f_v, starting at ℓ = v+1 where Q = diag(φ'(f_v)).
  Mat Q = act_mask(a.activation, trace.f[v]).col(0).asDiagonal();
  for (std::size_t ell = v + 1; ell <= a.L; ++ell) {
    if (ell > v + 1) {
      const Vec mask = act_mask(a.activation, trace.f[ell - 1]).col(0);
      Q = mask.asDiagonal() * (model.W(ell - 1) * Q);
    }
    const double w = lrs.at(ell) * bt.b[ell].squaredNorm();
    if (w != 0.0) K.noalias() += w * (Q.transpose() * Q);
  }
  return K;
}

// ---------------------------------------------------------------------------
// spectra

struct SpectralMoments {
  double m1 = 0.0, m2 = 0.0, m4 = 0.0;
  double lambda_min = 0.0, lambda_max = 0.0;

  /// Asymptotic cosine M_1/√M_2 (NaN for the zero matrix).
  double predicted_cos() const {
    return m2 > 0.0 ? m1 / std::sqrt(m2) : std::numeric_limits<double>::quiet_NaN();
  }
};

inline SpectralMoments spectral_moments(const Mat& K, double tol = kDefaultEigTol) {
  const std::vector<double> ev = sym_eigvals(K, tol);
  if (ev.empty()) throw std::invalid_argument("spectral_moments: empty matrix");
  const double scale = std::max(std::abs(ev.front()), std::abs(ev.back()));
  SpectralMoments s;
  const double n = static_cast<double>(ev.size());
  std::vector<double> clipped;
  clipped.reserve(ev.size());
  // Jacobi returns each eigenvalue to about √n·ε·‖K‖; anything more negative is a real defect.
  const double floor = -std::max(tol, 64.0 * std::numeric_limits<double>::epsilon() * std::sqrt(n)) * scale;
  for (double lam : ev) {
    if (lam < floor) throw std::invalid_argument("spectral_moments: matrix is indefinite");
    clipped.push_back(std::max(lam, 0.0));
  }
  for (double lam : clipped) {
    const double l2 = lam * lam;
    s.m1 += lam;
    s.m2 += l2;
    s.m4 += l2 * l2;
  }
  s.m1 /= n;
  s.m2 /= n;
  s.m4 /= n;
  s.lambda_max = clipped.front();
  s.lambda_min = clipped.back();
  return s;
}

struct HutchinsonResult {
  double mean = 0.0;
  double variance = 0.0;
};

/// Sample mean and variance of ‖K a‖² for a ~ N(0, I/m); estimates M_2(K)
/// and (2/m)·M_4(K).
inline HutchinsonResult hutchinson_check(const Mat& K, std::size_t n_probes, std::uint64_t seed) {
  if (K.rows() != K.cols() || K.rows() == 0) throw std::invalid_argument("hutchinson_check: K must be square");
  if (n_probes < 2) throw std::invalid_argument("hutchinson_check: need at least 2 probes");
  const auto m = static_cast<std::size_t>(K.rows());
  const double sd = 1.0 / std::sqrt(static_cast<double>(m));
  double mean = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < n_probes; ++i) {
    const Vec probe = gaussian_vector(m, sd, derive_seed(seed, {i}));
    const double val = (K * probe).squaredNorm();
    // Welford update
    const double delta = val - mean;
    mean += delta / static_cast<double>(i + 1);
    m2 += delta * (val - mean);
  }
  return {mean, m2 / static_cast<double>(n_probes - 1)};
}

// ---------------------------------------------------------------------------
// per-layer diagnostics

struct ExactMethod {};
struct FiniteDifference {
  double dt = kDefaultFdDt;
};
using VelocityMethod = std::variant<ExactMethod, FiniteDifference>;

struct LayerDiagnostics {
  std::size_t v = 0;
  double theta_v = std::numeric_limits<double>::quiet_NaN();        // angle(ḟ_v, −b_v)
  double cos_theta = std::numeric_limits<double>::quiet_NaN();
  double theta_tilde_v = std::numeric_limits<double>::quiet_NaN();  // angle(f_v, −ḃ_v)
  double cos_theta_tilde = std::numeric_limits<double>::quiet_NaN();
  double S_v = std::numeric_limits<double>::quiet_NaN();
  double feature_speed_residual = std::numeric_limits<double>::quiet_NaN();
  double backward_speed_residual = std::numeric_limits<double>::quiet_NaN();
  double contribution_below = 0.0;  // Σ_{ℓ≤v} η_ℓ‖∇_ℓ‖²
  double contribution_above = 0.0;  // Σ_{ℓ>v} η_ℓ‖∇_ℓ‖²
  double b_rms = 0.0, f_rms = 0.0;
  double f_dot_rms = 0.0, b_dot_rms = 0.0;
  double f_dot_norm = 0.0, b_dot_norm = 0.0;
  bool zero_velocity = false;  // contribution_below == 0, hence ḟ_v = 0
  bool degenerate = false;     // measured ḟ_v (or ḃ_v) vanished although it should not
};

namespace detail {

inline double relative_gap(double measured, double expected) {
  const double denom = std::abs(expected);
  return denom > 0.0 ? std::abs(measured - expected) / denom : std::abs(measured);
}

inline LayerDiagnostics diagnose(const Model& model, const LossSpec& loss, const ForwardTrace& trace,
                                 const BackwardTrace& bt, const ResolvedLRs& lrs, std::size_t v,
                                 const Mat& f_dot_v, const Mat& b_dot_v, const Mat& f_dot_L) {
  const std::size_t L = model.arch.L;
  LayerDiagnostics d;
  d.v = v;
  d.contribution_below = contribution_sum(bt, lrs, 1, v);
  d.contribution_above = v < L ? contribution_sum(bt, lrs, v + 1, L) : 0.0;
  const Mat& b = bt.b[v];
  const Mat& f = trace.f[v];
  d.b_rms = rms_norm(b);
  d.f_rms = rms_norm(f);
  d.f_dot_norm = f_dot_v.norm();
  d.b_dot_norm = b_dot_v.norm();
  d.f_dot_rms = rms_norm(f_dot_v);
  d.b_dot_rms = rms_norm(b_dot_v);

  if (d.contribution_below == 0.0) {
    d.zero_velocity = true;
  } else if (d.f_dot_norm == 0.0 || b.norm() == 0.0) {
    d.degenerate = true;
  } else {
    const double inner = -b.cwiseProduct(f_dot_v).sum();
    d.cos_theta = inner / (b.norm() * d.f_dot_norm);
    d.theta_v = std::acos(std::clamp(d.cos_theta, -1.0, 1.0));
    d.S_v = d.f_dot_rms / d.contribution_below;
    d.feature_speed_residual = relative_gap(inner, d.contribution_below);
  }

  // −ḃ_vᵀf_v = −f_Lᵀ∇²loss ḟ_L + Σ_{ℓ>v} η_ℓ‖∇_ℓ‖²
  const double rhs = -loss_hessian_form(loss, trace.f[L], f_dot_L) + d.contribution_above;
  const double lhs = -b_dot_v.cwiseProduct(f).sum();
  d.backward_speed_residual = relative_gap(lhs, rhs);
  if (d.b_dot_norm > 0.0 && f.norm() > 0.0) {
    d.cos_theta_tilde = lhs / (d.b_dot_norm * f.norm());
    d.theta_tilde_v = std::acos(std::clamp(d.cos_theta_tilde, -1.0, 1.0));
  } else if (rhs != 0.0) {
    d.degenerate = true;
  }
  return d;
}

}  // namespace detail

/// Diagnostics for every layer v ∈ [1:L] from a single velocity computation.
inline std::vector<LayerDiagnostics> all_layer_diagnostics(const Model& model, const LossSpec& loss,
                                                           const ForwardTrace& trace, const BackwardTrace& bt,
                                                           const ResolvedLRs& lrs,
                                                           const VelocityMethod& method = ExactMethod{}) {
  const std::size_t L = model.arch.L;
  std::vector<Mat> f_dot(L + 1), b_dot(L + 1);
  if (std::holds_alternative<ExactMethod>(method)) {
    Velocities vel = velocities(model, loss, trace, bt, lrs);
    f_dot = std::move(vel.f_dot);
    b_dot = std::move(vel.b_dot);
  } else {
    const double dt = std::get<FiniteDifference>(method).dt;
    const Model next = gd_step(model, bt, lrs, dt);
    const ForwardTrace t2 = forward(next, trace.f[0], loss);
    const BackwardTrace bt2 = backward(next, t2, loss);
    for (std::size_t ell = 0; ell <= L; ++ell) f_dot[ell] = (t2.f[ell] - trace.f[ell]) / dt;
    for (std::size_t ell = 1; ell <= L; ++ell) b_dot[ell] = (bt2.b[ell] - bt.b[ell]) / dt;
  }
  std::vector<LayerDiagnostics> out;
  out.reserve(L);
  for (std::size_t v = 1; v <= L; ++v)
    out.push_back(detail::diagnose(model, loss, trace, bt, lrs, v, f_dot[v], b_dot[v], f_dot[L]));
  return out;
}

inline LayerDiagnostics layer_diagnostics(const Model& model, const LossSpec& loss, const ForwardTrace& trace,
                                          const BackwardTrace& bt, const ResolvedLRs& lrs, std::size_t v,
                                          const VelocityMethod& method = ExactMethod{}) {
  if (v < 1 || v > model.arch.L) throw std::invalid_argument("layer_diagnostics: layer out of range");
  return all_layer_diagnostics(model, loss, trace, bt, lrs, method)[v - 1];
}

/// One-step sensitivity ‖δf_v‖_rms/|δL| measured with an actual GD step.
inline double one_step_sensitivity(const Model& model, const LossSpec& loss, const ForwardTrace& trace,
                                   const BackwardTrace& bt, const ResolvedLRs& lrs, std::size_t v, double dt) {
  const Model next = gd_step(model, bt, lrs, dt);
  const ForwardTrace t2 = forward(next, trace.f[0], loss);
  const double dL = std::abs(t2.loss_value - loss_eval(loss, trace.f[model.arch.L]).value);
  if (dL == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return rms_norm(Mat(t2.f[v] - trace.f[v])) / dL;
}

}  // namespace featspeed
