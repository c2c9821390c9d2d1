#include "featspeed/numerics.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

using namespace featspeed;

namespace {

// Faddeev-LeVerrier coefficients of det(λI - A), highest degree first.
std::vector<double> char_poly(const Mat& A) {
  const Eigen::Index n = A.rows();
  std::vector<double> c(static_cast<std::size_t>(n) + 1, 0.0);
  c[0] = 1.0;
  Mat M = Mat::Zero(n, n);
  const Mat I = Mat::Identity(n, n);
  for (Eigen::Index k = 1; k <= n; ++k) {
    M = A * M + c[static_cast<std::size_t>(k - 1)] * I;
    c[static_cast<std::size_t>(k)] = -(A * M).trace() / static_cast<double>(k);
  }
  return c;
}

double poly_eval(const std::vector<double>& c, double x) {
  double v = 0.0;
  for (double a : c) v = v * x + a;
  return v;
}

// Real roots by sign-change scan plus bisection; adequate for simple roots.
std::vector<double> poly_roots(const std::vector<double>& c, double lo, double hi, int grid) {
  std::vector<double> roots;
  double x0 = lo, p0 = poly_eval(c, lo);
  for (int i = 1; i <= grid; ++i) {
    const double x1 = lo + (hi - lo) * i / grid, p1 = poly_eval(c, x1);
    if (p0 == 0.0) roots.push_back(x0);
    else if (p0 * p1 < 0.0) {
      double a = x0, b = x1, pa = p0;
      for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (a + b), pm = poly_eval(c, mid);
        if (pa * pm <= 0.0) b = mid;
        else a = mid, pa = pm;
      }
      roots.push_back(0.5 * (a + b));
    }
    x0 = x1, p0 = p1;
  }
  std::sort(roots.begin(), roots.end(), std::greater<>());
  return roots;
}

}  // namespace

TEST(Numerics, RmsNormDividesBySqrtDimension) {
  Vec v(4);
  v << 1, -1, 1, -1;
  EXPECT_DOUBLE_EQ(rms_norm(v), 1.0);
  Mat m = Mat::Constant(3, 3, 2.0);
  EXPECT_DOUBLE_EQ(rms_norm(m), 2.0);
  EXPECT_THROW(rms_norm(Vec()), std::invalid_argument);
}

TEST(Numerics, CosineOfZeroIsNan) {
  Vec a(2), b(2);
  a << 1, 0;
  b << 1, 1;
  EXPECT_NEAR(cosine(a, b), 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_TRUE(std::isnan(cosine(a, Vec::Zero(2))));
}

TEST(Numerics, DerivedSeedsDependOnWholePath) {
  EXPECT_EQ(derive_seed(1, {2, 3}), derive_seed(1, {2, 3}));
  EXPECT_NE(derive_seed(1, {2, 3}), derive_seed(1, {3, 2}));
  EXPECT_NE(derive_seed(1, {2}), derive_seed(2, {2}));
  EXPECT_NE(derive_seed(1, {2}), derive_seed(1, {2, 0}));
}

TEST(Numerics, KeyedStreamMoments) {
  const KeyedStream s(99);
  const int n = 200000;
  double mu = 0.0, m2 = 0.0, umin = 1.0, umax = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = s.normal(static_cast<std::uint64_t>(i));
    mu += z;
    m2 += z * z;
    const double u = s.uniform(static_cast<std::uint64_t>(i));
    umin = std::min(umin, u), umax = std::max(umax, u);
  }
  mu /= n;
  m2 /= n;
  EXPECT_NEAR(mu, 0.0, 5.0 / std::sqrt(n));
  EXPECT_NEAR(m2, 1.0, 5.0 * std::sqrt(2.0 / n));
  EXPECT_GT(umin, 0.0);
  EXPECT_LT(umax, 1.0);
}

TEST(Numerics, GaussianMatrixMatchesStreamDraws) {
  const std::uint64_t seed = 1234;
  const KeyedStream s(seed);
  for (auto [r, c] : {std::pair{3, 3}, std::pair{4, 5}, std::pair{1, 1}}) {
    const Mat m = gaussian_matrix(r, c, 0.5, seed);
    for (int i = 0; i < r * c; ++i) EXPECT_DOUBLE_EQ(m.data()[i], 0.5 * s.normal(static_cast<std::uint64_t>(i)));
  }
  EXPECT_TRUE(gaussian_matrix(2, 2, 0.0, seed).isZero(0.0));
  EXPECT_THROW(gaussian_matrix(2, 2, -1.0, seed), std::invalid_argument);
}

TEST(Numerics, JacobiMatchesCharacteristicPolynomialRoots) {
  const Mat G = gaussian_matrix(6, 6, 1.0, 5);
  const Mat A = 0.5 * (G + G.transpose());
  const auto ev = sym_eigvals(A);
  const double bound = A.cwiseAbs().rowwise().sum().maxCoeff() + 1.0;
  const auto roots = poly_roots(char_poly(A), -bound, bound, 20000);
  ASSERT_EQ(roots.size(), 6u);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(ev[i], roots[i], 1e-9);
  EXPECT_NEAR(std::accumulate(ev.begin(), ev.end(), 0.0), A.trace(), 1e-12);
}

TEST(Numerics, JacobiRecoversPlantedSpectrumWithRepeats) {
  // Q from Householder reflections of a Gaussian matrix.
  const Mat G = gaussian_matrix(8, 8, 1.0, 11);
  const Mat Q = Eigen::HouseholderQR<Mat>(G).householderQ();
  Vec lam(8);
  lam << 5, 3, 3, 3, 1, 0, 0, -2;
  const Mat A = Q * lam.asDiagonal() * Q.transpose();
  const auto ev = sym_eigvals(A);
  for (int i = 0; i < 8; ++i) EXPECT_NEAR(ev[static_cast<std::size_t>(i)], lam(i), 1e-10);
}

TEST(Numerics, JacobiEdgeCases) {
  EXPECT_TRUE(sym_eigvals(Mat(0, 0)).empty());
  EXPECT_THROW(sym_eigvals(Mat::Zero(2, 3)), std::invalid_argument);
  Mat bad = Mat::Identity(2, 2);
  bad(0, 1) = NAN;
  EXPECT_THROW(sym_eigvals(bad), std::invalid_argument);
  const auto z = sym_eigvals(Mat::Zero(3, 3));
  for (double v : z) EXPECT_EQ(v, 0.0);
}

TEST(Numerics, PowerLawFitRecoversExponent) {
  std::vector<double> xs{8, 16, 32, 64, 128}, ys;
  for (double x : xs) ys.push_back(3.0 * std::pow(x, -0.5));
  const auto f = fit_power_law(xs, ys);
  EXPECT_NEAR(f.exponent, -0.5, 1e-12);
  EXPECT_NEAR(std::exp(f.log_intercept), 3.0, 1e-10);
  EXPECT_NEAR(f.r_squared, 1.0, 1e-12);
}

TEST(Numerics, PowerLawFitErrors) {
  EXPECT_THROW(fit_power_law(std::vector<double>{1, 2}, std::vector<double>{1, 2}), std::invalid_argument);
  EXPECT_THROW(fit_power_law(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2}), std::invalid_argument);
  EXPECT_THROW(fit_power_law(std::vector<double>{2, 2, 2}, std::vector<double>{1, 2, 3}), std::invalid_argument);
  EXPECT_THROW(fit_power_law(std::vector<double>{1, 2, 3}, std::vector<double>{1, -2, 3}), std::invalid_argument);
}

TEST(Numerics, Median) {
  EXPECT_DOUBLE_EQ(median({3, 1, 2}), 2.0);
  EXPECT_DOUBLE_EQ(median({4, 1, 3, 2}), 2.5);
  EXPECT_THROW(median({}), std::invalid_argument);
}
