#pragma once
// Dense linear algebra helpers, keyed Gaussian sampling, a cyclic Jacobi
// eigensolver and log-log power-law fits.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace featspeed {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// ---------------------------------------------------------------------------
// norms

/// ‖v‖₂ / sqrt(size). Works for vectors and for matrices (treated as the
/// concatenation of their columns).
template <class Derived>
double rms_norm(const Eigen::MatrixBase<Derived>& v) {
  if (v.size() == 0) throw std::invalid_argument("rms_norm: empty vector");
  return v.norm() / std::sqrt(static_cast<double>(v.size()));
}

template <class Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& v) {
  return v.allFinite();
}

/// Flattened (column-concatenated) view of a matrix.
inline Eigen::Map<const Vec> flat(const Mat& m) { return {m.data(), m.size()}; }

/// Cosine of the angle between two flattened arrays; NaN when either is zero.
template <class A, class B>
double cosine(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return a.cwiseProduct(b).sum() / (na * nb);
}

// ---------------------------------------------------------------------------
// keyed random streams

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += kGolden;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Derives an independent stream key from a base seed and a path of
/// identifiers, e.g. derive_seed(base, {experiment, trial, layer}).
inline std::uint64_t derive_seed(std::uint64_t base,
                                 std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = splitmix64(base);
  for (std::uint64_t id : path) h = splitmix64(h ^ splitmix64(id * kGolden + 0x632BE59BD9B4E019ULL));
  return h;
}

/// Counter-based stream: the i-th draw depends only on (key, i).
class KeyedStream {
 public:
  explicit KeyedStream(std::uint64_t key) : key_(key) {}

  std::uint64_t bits(std::uint64_t i) const { return splitmix64(key_ + i * kGolden); }

  /// Uniform in the open interval (0, 1).
  double uniform(std::uint64_t i) const {
    return (static_cast<double>(bits(i) >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal; entries 2j and 2j+1 share one Box-Muller pair.
  double normal(std::uint64_t i) const {
    const std::uint64_t pair = i / 2;
    const double r = std::sqrt(-2.0 * std::log(uniform(2 * pair)));
    const double angle = 2.0 * std::numbers::pi * uniform(2 * pair + 1);
    return (i % 2 == 0) ? r * std::cos(angle) : r * std::sin(angle);
  }

  std::uint64_t index_below(std::uint64_t i, std::uint64_t n) const { return bits(i) % n; }

 private:
  std::uint64_t key_;
};

inline Mat gaussian_matrix(std::size_t rows, std::size_t cols, double std_dev, std::uint64_t seed) {
  if (!(std_dev >= 0.0)) throw std::invalid_argument("gaussian_matrix: negative std");
  Mat out(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  if (std_dev == 0.0) {
    out.setZero();
    return out;
  }
  const KeyedStream stream(seed);
  double* p = out.data();
  const std::size_t n = rows * cols;
  // Both members of each Box-Muller pair at once; identical to stream.normal(i).
  for (std::size_t i = 0; i + 1 < n; i += 2) {
    const double r = std_dev * std::sqrt(-2.0 * std::log(stream.uniform(i)));
    const double angle = 2.0 * std::numbers::pi * stream.uniform(i + 1);
    p[i] = r * std::cos(angle);
    p[i + 1] = r * std::sin(angle);
  }
  if (n % 2 == 1) p[n - 1] = std_dev * stream.normal(n - 1);
  return out;
}

inline Vec gaussian_vector(std::size_t n, double std_dev, std::uint64_t seed) {
  Mat m = gaussian_matrix(n, 1, std_dev, seed);
  return Eigen::Map<Vec>(m.data(), m.size());
}

// ---------------------------------------------------------------------------
// symmetric eigenvalues (cyclic Jacobi)

inline constexpr double kDefaultEigTol = 1e-10;

/// Eigenvalues of (M + Mᵀ)/2 sorted descending. Throws if M is not square or
/// if max|M - Mᵀ| exceeds tol times the largest entry magnitude.
inline std::vector<double> sym_eigvals(const Mat& M, double tol = kDefaultEigTol) {
  if (M.rows() != M.cols()) throw std::invalid_argument("sym_eigvals: matrix not square");
  const Eigen::Index n = M.rows();
  if (n == 0) return {};
  const double scale = M.cwiseAbs().maxCoeff();
  if ((M - M.transpose()).cwiseAbs().maxCoeff() > tol * scale)
    throw std::invalid_argument("sym_eigvals: matrix not symmetric");
  if (!M.allFinite()) throw std::invalid_argument("sym_eigvals: non-finite entries");

  Mat A = 0.5 * (M + M.transpose());
  const double fro = A.norm();
  const double eps = std::numeric_limits<double>::epsilon();

  auto off_norm2 = [&] {
    double s = 0.0;
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index i = 0; i < j; ++i) s += A(i, j) * A(i, j);
    return 2.0 * s;
  };

  for (int sweep = 0; sweep < 100; ++sweep) {
    const double off = off_norm2();
    if (off <= (eps * fro) * (eps * fro) || off == 0.0) break;
    // Early sweeps skip rotations on entries that are already small.
    const double threshold = sweep < 3 ? 0.2 * std::sqrt(off) / static_cast<double>(n * n) : 0.0;
    for (Eigen::Index p = 0; p < n - 1; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = A(p, q);
        if (std::abs(apq) <= threshold || apq == 0.0) continue;
        const double app = A(p, p);
        const double aqq = A(q, q);
        if (sweep > 3 && std::abs(apq) < eps * 1e-3 * std::min(std::abs(app), std::abs(aqq))) {
          A(p, q) = A(q, p) = 0.0;
          continue;
        }
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        double* colp = A.col(p).data();
        double* colq = A.col(q).data();
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = colp[k];
          const double akq = colq[k];
          colp[k] = c * akp - s * akq;
          colq[k] = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          A(p, k) = colp[k];
          A(q, k) = colq[k];
        }
        A(p, p) = app - t * apq;
        A(q, q) = aqq + t * apq;
        A(p, q) = A(q, p) = 0.0;
      }
    }
  }

  std::vector<double> ev(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) ev[static_cast<std::size_t>(i)] = A(i, i);
  std::sort(ev.begin(), ev.end(), std::greater<>());
  return ev;
}

// ---------------------------------------------------------------------------
// power-law fits

struct PowerLawFit {
  double exponent = 0.0;
  double log_intercept = 0.0;
  double r_squared = 0.0;
};

/// Least-squares line through (log x, log y).
inline PowerLawFit fit_power_law(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw std::invalid_argument("fit_power_law: length mismatch");
  if (xs.size() < 3) throw std::invalid_argument("fit_power_law: need at least 3 points");
  const std::size_t n = xs.size();
  std::vector<double> lx(n), ly(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(xs[i] > 0.0) || !(ys[i] > 0.0) || !std::isfinite(xs[i]) || !std::isfinite(ys[i]))
      throw std::invalid_argument("fit_power_law: values must be finite and strictly positive");
    lx[i] = std::log(xs[i]);
    ly[i] = std::log(ys[i]);
  }
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
    syy += (ly[i] - my) * (ly[i] - my);
  }
  if (sxx == 0.0) throw std::invalid_argument("fit_power_law: xs must not all be equal");
  PowerLawFit fit;
  fit.exponent = sxy / sxx;
  fit.log_intercept = my - fit.exponent * mx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = ly[i] - (fit.log_intercept + fit.exponent * lx[i]);
    ss_res += r * r;
  }
  // Constant ys are fitted perfectly by a flat line.
  fit.r_squared = syy <= 1e-300 ? 1.0 : std::clamp(1.0 - ss_res / syy, 0.0, 1.0);
  return fit;
}

inline PowerLawFit fit_power_law(const std::vector<double>& xs, const std::vector<double>& ys) {
  return fit_power_law(std::span<const double>(xs), std::span<const double>(ys));
}

inline double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median: empty input");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace featspeed
