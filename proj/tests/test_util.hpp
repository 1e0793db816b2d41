#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <Eigen/Eigenvalues>

#include "ivrobust/linalg.hpp"
#include "ivrobust/quadrature.hpp"
#include "ivrobust/random.hpp"

namespace testutil {

using ivrobust::CounterStream;
using ivrobust::Matrix;
using ivrobust::Vector;

inline Matrix random_matrix(Eigen::Index r, Eigen::Index c, CounterStream& rng) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

inline Vector random_vector(Eigen::Index n, CounterStream& rng) { return random_matrix(n, 1, rng); }

// Independent of the library: plain symmetric eigendecomposition.
inline Matrix eig_inv_sqrt(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (a + a.transpose()));
  return es.eigenvectors() * es.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
}

inline Matrix eig_sqrt(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (a + a.transpose()));
  return es.eigenvectors() * es.eigenvalues().cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

// Element-wise relative error with an absolute floor of 1 on the scale.
inline double max_rel_err(const Matrix& a, const Matrix& b) {
  double e = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i)
    e = std::max(e, std::abs(a.data()[i] - b.data()[i]) / std::max(1.0, std::abs(b.data()[i])));
  return e;
}

template <class F>
double tensor_gl2(F&& f, double x0, double x1, double y0, double y1, int panels) {
  const auto& gl = ivrobust::GaussLegendre<10>::get();
  const double hx = (x1 - x0) / panels, hy = (y1 - y0) / panels;
  double total = 0.0;
  for (int px = 0; px < panels; ++px)
    for (int i = 0; i < 10; ++i) {
      const double x = x0 + (px + 0.5) * hx + 0.5 * hx * gl.x[i];
      for (int py = 0; py < panels; ++py)
        for (int j = 0; j < 10; ++j) {
          const double y = y0 + (py + 0.5) * hy + 0.5 * hy * gl.x[j];
          total += 0.25 * hx * hy * gl.w[i] * gl.w[j] * f(x, y);
        }
    }
  return total;
}

// Dense oracles built straight from the Kronecker-product formulas.
struct Dense {
  Matrix sigma0;
  Matrix sinv;
  Eigen::Index k;

  explicit Dense(const Matrix& s) : sigma0(s), sinv(s.inverse()), k(s.rows() / 2) {}

  Matrix a_kron(double a1, double a2) const {
    Matrix a(2, 1);
    a << a1, a2;
    return ivrobust::kron(a, Matrix::Identity(k, k));
  }

  // vec(R0)' Sigma0^{-1} A (A' Sigma0^{-1} A)^{-1} A' Sigma0^{-1} vec(R0), A = (a1, a2)' kron I.
  double q(const Matrix& r0, double a1, double a2) const {
    const Matrix a = a_kron(a1, a2);
    const Vector x = sinv * ivrobust::vec(r0);
    const Vector ax = a.transpose() * x;
    return ax.dot((a.transpose() * sinv * a).ldlt().solve(ax));
  }

  double log_det_a(double a1, double a2) const {
    const Matrix a = a_kron(a1, a2);
    return std::log((a.transpose() * sinv * a).determinant());
  }

  double tt(const Matrix& r0) const { return q(r0, 0.0, 1.0); }

  double lr_grid(const Matrix& r0, int n) const {
    double best = -1e300;
    for (int i = 0; i < n; ++i) {
      const double th = -0.5 * std::numbers::pi + (i + 0.5) * std::numbers::pi / n;
      best = std::max(best, q(r0, std::sin(th), std::cos(th)));
    }
    return best - tt(r0);
  }

  // IL in theta with Delta = tan(theta); the sec^2 Jacobian and the powers of
  // cos theta from the determinant and the weight cancel.
  double log_integrand(const Matrix& r0, double th, double t2) const {
    const double s = std::sin(th), c = std::cos(th);
    return (k == 2 ? 0.0 : (k - 2) * std::log(std::abs(s))) - 0.5 * log_det_a(s, c) + 0.5 * (q(r0, s, c) - t2);
  }

  // log IL with the integrand rescaled by exp(-shift) so large statistics do not overflow.
  double log_il(const Matrix& r0, double shift) const {
    const double t2 = tt(r0);
    auto f = [&](double th) { return th == 0.0 && k > 2 ? 0.0 : std::exp(log_integrand(r0, th, t2) - shift); };
    double err = 0.0;
    return shift + std::log(boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
                               f, -0.5 * std::numbers::pi, 0.5 * std::numbers::pi, 25, 1e-12, &err));
  }

  double il(const Matrix& r0) const {
    const double t2 = tt(r0);
    auto f = [&](double th) {
      const double s = std::sin(th), c = std::cos(th);
      return std::pow(std::abs(s), static_cast<double>(k - 2)) * std::exp(-0.5 * log_det_a(s, c) + 0.5 * (q(r0, s, c) - t2));
    };
    double err = 0.0;
    return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, -0.5 * std::numbers::pi,
                                                                           0.5 * std::numbers::pi, 15, 1e-12, &err);
  }
};

}  // namespace testutil
