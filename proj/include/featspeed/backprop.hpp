#pragma once
// Backward pass, weight gradients, layer-to-layer Jacobians, learning-rate
// resolution and the gradient-descent step.

#include "featspeed/network.hpp"

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace featspeed {

struct BackwardTrace {
  std::vector<Mat> b;          // b[ℓ] = (∂L/∂f_ℓ)ᵀ for ℓ ∈ [1:L]; b[0] unused
  std::vector<Mat> z;          // MLP: z[ℓ] = (∂L/∂g_ℓ)ᵀ for ℓ ∈ [1:L-1]
  std::vector<Mat> grads;      // grads[ℓ-1] = ∇_ℓ L
  std::vector<double> grad_norms;  // Frobenius norms of grads

  const Mat& grad(std::size_t ell) const { return grads.at(ell - 1); }
  double grad_norm(std::size_t ell) const { return grad_norms.at(ell - 1); }
};

struct ResolvedLRs {
  std::vector<double> eta;  // eta[ℓ-1] = η_ℓ

  double at(std::size_t ell) const { return eta.at(ell - 1); }
};

/// Input multiplied by W_ℓ in the forward pass, together with the scalar
/// factor in front of the product (β for ResNet branches, 1 otherwise).
struct BlockInput {
  const Mat* h;
  double scale;
};

inline BlockInput block_input(const Model& model, const ForwardTrace& trace, std::size_t ell) {
  const ArchSpec& a = model.arch;
  if (a.kind == ArchKind::MLP) return {&trace.g[ell - 1], 1.0};
  if (ell == 1) return {&trace.f[0], 1.0};
  if (ell == a.L) return {&trace.f[a.L - 1], 1.0};
  return {&trace.g[ell - 1], a.beta};
}

inline void check_trace(const Model& model, const ForwardTrace& trace) {
  model.check_shapes();
  const ArchSpec& a = model.arch;
  if (trace.f.size() != a.L + 1 || trace.g.size() != a.L) throw std::invalid_argument("trace/model mismatch: depth");
  const auto n = trace.f[0].cols();
  for (std::size_t ell = 0; ell <= a.L; ++ell) {
    if (static_cast<std::size_t>(trace.f[ell].rows()) != a.width(ell) || trace.f[ell].cols() != n)
      throw std::invalid_argument("trace/model mismatch at layer " + std::to_string(ell));
  }
}

inline BackwardTrace backward(const Model& model, const ForwardTrace& trace, const LossSpec& loss) {
  check_trace(model, trace);
  const ArchSpec& a = model.arch;
  const std::size_t L = a.L;
  if (loss.k() != a.k) throw std::invalid_argument("backward: loss dimension mismatch");

  BackwardTrace bt;
  bt.b.resize(L + 1);
  bt.grads.resize(L);
  bt.grad_norms.resize(L);
  bt.b[L] = loss_eval(loss, trace.f[L]).grad;

  if (a.kind == ArchKind::MLP) {
    bt.z.resize(L);
    for (std::size_t ell = L - 1; ell >= 1; --ell) {
      bt.z[ell] = model.W(ell + 1).transpose() * bt.b[ell + 1];
      bt.b[ell] = bt.z[ell].cwiseProduct(act_mask(a.activation, trace.f[ell]));
    }
  } else {
    const double skip = a.skip();
    bt.b[L - 1] = model.W(L).transpose() * bt.b[L];
    for (std::size_t ell = L - 1; ell >= 2; --ell) {
      const Mat back = model.W(ell).transpose() * bt.b[ell];
      bt.b[ell - 1] = skip * bt.b[ell] + a.beta * back.cwiseProduct(act_mask(a.activation, trace.f[ell - 1]));
    }
  }

  for (std::size_t ell = 1; ell <= L; ++ell) {
    const BlockInput in = block_input(model, trace, ell);
    // Sums of per-sample outer products b_ℓ hᵀ.
    bt.grads[ell - 1] = in.scale * (bt.b[ell] * in.h->transpose());
    bt.grad_norms[ell - 1] = bt.grads[ell - 1].norm();
  }
  return bt;
}

/// ∂f_j/∂f_{j-1} for a single sample, j ∈ [2:L].
inline Mat step_jacobian(const Model& model, const ForwardTrace& trace, std::size_t j, Eigen::Index sample = 0) {
  const ArchSpec& a = model.arch;
  const Vec mask = act_mask(a.activation, trace.f[j - 1].col(sample));
  if (a.kind == ArchKind::MLP) return model.W(j) * mask.asDiagonal();
  if (j == a.L) return model.W(j);
  Mat J = a.beta * (model.W(j) * mask.asDiagonal());
  J.diagonal().array() += a.skip();
  return J;
}

/// Explicit ∂f_v/∂f_ℓ (1 ≤ ℓ ≤ v ≤ L) for a single-sample trace.
inline Mat jacobian(const Model& model, const ForwardTrace& trace, std::size_t from_layer, std::size_t to_layer) {
  check_trace(model, trace);
  if (trace.batch() != 1) throw std::invalid_argument("jacobian requires single sample");
  if (from_layer < 1 || from_layer > to_layer || to_layer > model.arch.L)
    throw std::invalid_argument("jacobian: need 1 <= from <= to <= L");
  const auto mv = static_cast<Eigen::Index>(model.arch.width(to_layer));
  Mat P = Mat::Identity(mv, mv);
  for (std::size_t j = to_layer; j > from_layer; --j) P = P * step_jacobian(model, trace, j);
  return P;
}

inline ResolvedLRs resolve_lrs(const ScalingScheme& scheme, const BackwardTrace& bt, std::size_t L) {
  if (bt.grad_norms.size() != L) throw std::invalid_argument("resolve_lrs: gradient count mismatch");
  ResolvedLRs lrs;
  lrs.eta.assign(L, 0.0);
  const double Ld = static_cast<double>(L);
  for (std::size_t ell = 1; ell <= L; ++ell) {
    if (ell == 1 && !scheme.train_input) continue;
    const double base = scheme.eta(ell, L);
    const double gn = bt.grad_norm(ell);
    double eta = 0.0;
    switch (scheme.lr_mode) {
      case LrMode::Fixed: eta = base; break;
      case LrMode::ScaleInvariantQuadratic: eta = gn > 0.0 ? base / (Ld * gn * gn) : 0.0; break;
      case LrMode::ScaleInvariantNormalized: eta = gn > 0.0 ? base / (Ld * gn) : 0.0; break;
    }
    // Underflowing gradient norms can make the quotient overflow.
    lrs.eta[ell - 1] = std::isfinite(eta) ? eta : 0.0;
  }
  return lrs;
}

/// W_ℓ ← W_ℓ − η_ℓ·dt·∇_ℓL on a copy of the model.
inline Model gd_step(const Model& model, const BackwardTrace& bt, const ResolvedLRs& lrs, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("gd_step: dt must be > 0");
  if (lrs.eta.size() != model.weights.size() || bt.grads.size() != model.weights.size())
    throw std::invalid_argument("gd_step: size mismatch");
  Model next = model;
  for (std::size_t ell = 1; ell <= model.arch.L; ++ell) {
    const double step = lrs.at(ell) * dt;
    if (step != 0.0) next.W(ell) -= step * bt.grad(ell);
  }
  return next;
}

/// Σ_{ℓ ∈ [first:last]} η_ℓ‖∇_ℓL‖².
inline double contribution_sum(const BackwardTrace& bt, const ResolvedLRs& lrs, std::size_t first, std::size_t last) {
  double s = 0.0;
  for (std::size_t ell = first; ell <= last; ++ell) s += lrs.at(ell) * bt.grad_norm(ell) * bt.grad_norm(ell);
  return s;
}

}  // namespace featspeed
