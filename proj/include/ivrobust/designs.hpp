#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>

#include "ivrobust/errors.hpp"
#include "ivrobust/linalg.hpp"
#include "ivrobust/special.hpp"

namespace ivrobust {

/// Low-power covariance design: Sigma11 = c11 I, Sigma12 = Sigma21 = c12 J (J the
/// anti-diagonal ones matrix), Sigma22 = c22 I, mu = sqrt(lambda) mu_direction.
struct DesignSpec {
  int k = 2;
  double c11 = 1.0;
  double c12 = 100.0;
  std::optional<double> c22;  // default c12^2 + c12^{-3}
  double lambda = 50.0;
  Vector mu_direction;  // default e1

  double c22_value() const { return c22 ? *c22 : c12 * c12 + std::pow(c12, -3.0); }

  Vector mu() const {
    Vector dir = mu_direction.size() == 0 ? Vector::Unit(k, 0) : mu_direction;
    if (dir.size() != k) throw InvalidInput("mu_direction must have length k");
    const double n = dir.norm();
    if (!(n > 0.0)) throw InvalidInput("mu_direction must be nonzero");
    return std::sqrt(lambda) * dir / n;
  }
};

/// Eigenvalues (c11 + c22 +- sqrt((c11 - c22)^2 + 4 c12^2)) / 2, each of multiplicity k.
inline std::pair<double, double> design_eigenvalues(const DesignSpec& spec) {
  const double c22 = spec.c22_value();
  const double root = std::hypot(spec.c11 - c22, 2.0 * spec.c12);
  const double sum = spec.c11 + c22;
  const double hi = 0.5 * (sum + root);
  // product form avoids cancellation in the small eigenvalue
  const double lo = (spec.c11 * c22 - spec.c12 * spec.c12) / hi;
  return {hi, lo};
}

inline Matrix anti_diagonal(Eigen::Index k) {
  Matrix j = Matrix::Zero(k, k);
  for (Eigen::Index i = 0; i < k; ++i) j(i, k - 1 - i) = 1.0;
  return j;
}

inline Matrix low_power_sigma(const DesignSpec& spec) {
  if (spec.k < 2) throw InvalidInput("design requires k >= 2");
  const double c22 = spec.c22_value();
  if (!(spec.c11 > 0.0 && c22 > 0.0 && spec.c12 > 0.0)) throw InvalidInput("c11, c12, c22 must be positive");
  if (!(spec.c11 * c22 > spec.c12 * spec.c12)) {
    throw InvalidInput("design is not positive definite: smallest eigenvalue " +
                       std::to_string(design_eigenvalues(spec).second) + " (need c11 c22 > c12^2)");
  }
  const Eigen::Index k = spec.k;
  Matrix s(2 * k, 2 * k);
  s.topLeftCorner(k, k) = spec.c11 * Matrix::Identity(k, k);
  s.topRightCorner(k, k) = spec.c12 * anti_diagonal(k);
  s.bottomLeftCorner(k, k) = spec.c12 * anti_diagonal(k);
  s.bottomRightCorner(k, k) = c22 * Matrix::Identity(k, k);
  return s;
}

/// Blocks of Sigma and of Sigma^{-1}.
struct PartitionedSigma {
  Matrix s11, s12, s21, s22;
  Matrix sup11, sup12, sup21, sup22;
};

/// Inverse blocks by the partitioned-inverse formulas:
/// Sigma^{11} = (S11 - S12 S22^{-1} S21)^{-1}, Sigma^{22} = (S22 - S21 S11^{-1} S12)^{-1},
/// Sigma^{21} = -Sigma^{22} S21 S11^{-1}, Sigma^{12} = -Sigma^{11} S12 S22^{-1}.
inline PartitionedSigma partition(const Matrix& sigma) {
  if (sigma.rows() != sigma.cols() || sigma.rows() % 2 != 0 || sigma.rows() == 0)
    throw InvalidInput("Sigma must be 2k x 2k");
  const Eigen::Index k = sigma.rows() / 2;
  PartitionedSigma p;
  p.s11 = sigma.topLeftCorner(k, k);
  p.s12 = sigma.topRightCorner(k, k);
  p.s21 = sigma.bottomLeftCorner(k, k);
  p.s22 = sigma.bottomRightCorner(k, k);
  const Eigen::LDLT<Matrix> l11(p.s11), l22(p.s22);
  const Matrix s11_inv_s12 = l11.solve(p.s12);
  const Matrix s22_inv_s21 = l22.solve(p.s21);
  p.sup11 = (p.s11 - p.s12 * s22_inv_s21).inverse();
  p.sup22 = (p.s22 - p.s21 * s11_inv_s12).inverse();
  p.sup21 = -p.sup22 * s11_inv_s12.transpose();
  p.sup12 = -p.sup11 * s22_inv_s21.transpose();
  return p;
}

namespace detail {

struct MuForms {
  double a = 0.0;    // mu' S11^{-1} mu
  double gap = 0.0;  // mu' S11^{-1} S21 S11^{-1} mu
  double b = 0.0;    // mu' S11^{-1} S12 S11^{-1} S21 S11^{-1} mu
};

inline MuForms mu_forms(const Vector& mu, const Matrix& sigma0) {
  const Eigen::Index k = sigma0.rows() / 2;
  if (sigma0.rows() != 2 * k || mu.size() != k) throw InvalidInput("mu must have length k matching Sigma0");
  const Matrix s11 = sigma0.topLeftCorner(k, k);
  const Matrix s21 = sigma0.bottomLeftCorner(k, k);
  const Eigen::LDLT<Matrix> l11(s11);
  const Vector x = l11.solve(mu);
  const Vector y = s21 * x;
  return {mu.dot(x), x.dot(y), y.dot(l11.solve(y))};
}

}  // namespace detail

/// mu' Sigma11^{-1} Sigma21 Sigma11^{-1} mu; zero in the low-power regime.
inline double orthogonality_gap(const Vector& mu, const Matrix& sigma0) { return detail::mu_forms(mu, sigma0).gap; }

/// mu' S11^{-1} mu / (mu' S11^{-1} S12 S11^{-1} S21 S11^{-1} mu)^{1/2}; +inf when the denominator is 0.
inline double lm_mean_bound(const Vector& mu, const Matrix& sigma0) {
  const detail::MuForms f = detail::mu_forms(mu, sigma0);
  if (!(f.b > 0.0)) return std::numeric_limits<double>::infinity();
  return f.a / std::sqrt(f.b);
}

/// Delta a / (a + Delta^2 b)^{1/2}, the approximating mean of LM1 when the orthogonality gap is 0.
inline double lm_asymptotic_mean(double delta, const Vector& mu, const Matrix& sigma0) {
  const detail::MuForms f = detail::mu_forms(mu, sigma0);
  if (std::abs(f.gap) > 1e-10 * std::max(1.0, f.a)) {
    throw InvalidInput("lm_asymptotic_mean requires a zero orthogonality gap (got " + std::to_string(f.gap) + ")");
  }
  const double den = f.a + delta * delta * f.b;
  return den > 0.0 ? delta * f.a / std::sqrt(den) : 0.0;
}

/// AR noncentrality Delta^2 mu' Sigma11^{-1} mu.
inline double ar_noncentrality(double delta, const Vector& mu, const Matrix& sigma0) {
  return delta * delta * detail::mu_forms(mu, sigma0).a;
}

/// P(chi2_k(ncp) > chi2_{k, 1 - alpha}).
inline double ar_power_oracle(double delta, const Vector& mu, const Matrix& sigma0, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidInput("alpha must lie in (0, 1)");
  const double k = static_cast<double>(mu.size());
  return ncx2_sf(chi2_quantile(1.0 - alpha, k), k, ar_noncentrality(delta, mu, sigma0));
}

}  // namespace ivrobust
