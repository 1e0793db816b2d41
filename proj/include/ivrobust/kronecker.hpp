#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>

#include <Eigen/Cholesky>
#include <Eigen/SVD>
#include <boost/math/special_functions/gamma.hpp>

#include "ivrobust/errors.hpp"
#include "ivrobust/linalg.hpp"
#include "ivrobust/model.hpp"
#include "ivrobust/special.hpp"

namespace ivrobust {

/// Sigma = Omega kron Phi with det(Phi) = 1.
struct KroneckerCov {
  Eigen::Matrix2d omega;
  Matrix phi;

  void validate() const {
    if (phi.rows() != phi.cols() || phi.rows() == 0) throw InvalidInput("Phi must be square");
    if (std::abs(phi.determinant() - 1.0) > 1e-10) throw InvalidInput("Phi must have determinant 1");
    spd_roots(omega, "Omega");
    spd_roots(phi, "Phi");
  }

  Matrix sigma() const { return kron(omega, phi); }
};

/// Gram matrix of [S : T].
struct QMatrix {
  double qs = 0.0;
  double qst = 0.0;
  double qt = 0.0;

  static QMatrix from(const STPair& st) { return {st.s.squaredNorm(), st.s.dot(st.t), st.t.squaredNorm()}; }
  double det() const { return qs * qt - qst * qst; }
};

/// Structural covariance of (u, v2).
struct StructuralCov {
  Eigen::Matrix2d psi;
};

inline Eigen::Vector2d b_vec(double beta0) { return {1.0, -beta0}; }
inline Eigen::Vector2d a_vec(double beta) { return {beta, 1.0}; }

/// S = Phi^{-1/2} R b0 (b0' Omega b0)^{-1/2}, T = Phi^{-1/2} R Omega^{-1} a0 (a0' Omega^{-1} a0)^{-1/2}.
inline STPair st_kron(const Matrix& r, const Eigen::Matrix2d& omega, const Matrix& phi, double beta0) {
  if (r.cols() != 2 || r.rows() != phi.rows()) throw InvalidInput("R must be k x 2 with k matching Phi");
  const Matrix phi_is = spd_roots(phi, "Phi").inv_sqrt;
  spd_roots(omega, "Omega");
  const Eigen::Vector2d b0 = b_vec(beta0), a0 = a_vec(beta0);
  const Eigen::Matrix2d oi = omega.inverse();
  const Eigen::Vector2d oia0 = oi * a0;
  Vector s = phi_is * (r * b0) / std::sqrt(b0.dot(omega * b0));
  Vector t = phi_is * (r * oia0) / std::sqrt(a0.dot(oia0));
  return {std::move(s), std::move(t)};
}

inline STPair st_kron(const Matrix& r, const KroneckerCov& cov, double beta0) {
  return st_kron(r, cov.omega, cov.phi, beta0);
}

struct CDScalars {
  double c = 0.0;
  double d = 0.0;
};

/// c = (beta - beta0)(b0' Omega b0)^{-1/2}, d = a' Omega^{-1} a0 (a0' Omega^{-1} a0)^{-1/2}.
/// E S = c Phi^{-1/2} mu and E T = d Phi^{-1/2} mu.
inline CDScalars cd_scalars(double beta, double beta0, const Eigen::Matrix2d& omega) {
  spd_roots(omega, "Omega");
  const Eigen::Vector2d b0 = b_vec(beta0), a0 = a_vec(beta0);
  const Eigen::Vector2d oia0 = omega.inverse() * a0;
  return {(beta - beta0) / std::sqrt(b0.dot(omega * b0)), a_vec(beta).dot(oia0) / std::sqrt(a0.dot(oia0))};
}

/// (omega11 - omega12 beta0) / (omega12 - omega22 beta0); empty when the denominator is 0.
/// d_beta vanishes at this value.
inline std::optional<double> beta_ar(double beta0, const Eigen::Matrix2d& omega) {
  const double den = omega(0, 1) - omega(1, 1) * beta0;
  if (den == 0.0) return std::nullopt;
  return (omega(0, 0) - omega(0, 1) * beta0) / den;
}

/// j = e1' Omega^{-1} a0 (a0' Omega^{-1} a0)^{-1/2}, so that d_beta = d_beta0 + j (beta - beta0).
inline double j_scalar(double beta0, const Eigen::Matrix2d& omega) {
  const Eigen::Vector2d a0 = a_vec(beta0);
  const Eigen::Vector2d oia0 = omega.inverse() * a0;
  return oia0(0) / std::sqrt(a0.dot(oia0));
}

struct TwoSidedImage {
  double beta = 0.0;
  double lambda = 0.0;
};

/// Sign transformation (c sqrt(lambda), d sqrt(lambda)) -> (-c sqrt(lambda), d sqrt(lambda))
/// written in (beta, lambda), which only see (c, d) up to a joint sign. Undefined where d_beta0 + 2 j (beta - beta0) = 0.
inline TwoSidedImage two_sided_param_map(double beta, double lambda, const Eigen::Matrix2d& omega, double beta0) {
  if (!(lambda >= 0.0)) throw InvalidInput("lambda must be non-negative");
  const double d0 = cd_scalars(beta0, beta0, omega).d;
  const double j = j_scalar(beta0, omega);
  const double delta = beta - beta0;
  const double den = d0 + 2.0 * j * delta;
  if (std::abs(den) <= 1e-14 * (std::abs(d0) + std::abs(2.0 * j * delta)))
    throw InvalidInput("two_sided_param_map: beta is at the pole beta0 - d0 / (2 j)");
  return {beta0 - d0 * delta / den, lambda * den * den / (d0 * d0)};
}

/// log of K0 with K0^{-1} = 2^{(k+2)/2} pi^{1/2} Gamma((k-1)/2).
inline double log_k0(int k) {
  return -(0.5 * (k + 2) * std::numbers::ln2 + 0.5 * std::log(std::numbers::pi) + std::lgamma(0.5 * (k - 1)));
}

/// xi_beta(q) = c^2 qS + 2 c d qST + d^2 qT.
inline double xi_beta(const QMatrix& q, const CDScalars& cd) {
  return cd.c * cd.c * q.qs + 2.0 * cd.c * cd.d * q.qst + cd.d * cd.d * q.qt;
}

/// log density of Q = (qS, qST, qT) with respect to dqS dqST dqT, k >= 2.
inline double log_q_density(const QMatrix& q, double beta, double lambda, int k, const Eigen::Matrix2d& omega,
                            double beta0) {
  if (k < 2) throw InvalidInput("q_density requires k >= 2");
  if (!(lambda >= 0.0)) throw InvalidInput("lambda must be non-negative");
  const double det = q.det();
  if (!(q.qs > 0.0 && q.qt > 0.0 && det > 0.0)) throw InvalidInput("q must be a positive definite Gram triple");
  const CDScalars cd = cd_scalars(beta, beta0, omega);
  double xi = xi_beta(q, cd);
  if (xi < 0.0) {
    if (xi < -1e-12 * (q.qs + q.qt) * (cd.c * cd.c + cd.d * cd.d)) throw NumericError("xi_beta(q) < 0");
    xi = 0.0;
  }
  const double nu = 0.5 * (k - 2);
  const double z = lambda * xi;
  // (z)^{-nu/2} I_nu(sqrt z) -> 1 / (2^nu Gamma(nu + 1)) as z -> 0
  const double bessel = z < 1e-12 ? -(nu * std::numbers::ln2 + std::lgamma(nu + 1.0))
                                  : -0.5 * nu * std::log(z) + log_bessel_i(nu, std::sqrt(z));
  return log_k0(k) - 0.5 * lambda * (cd.c * cd.c + cd.d * cd.d) + 0.5 * (k - 3) * std::log(det) -
         0.5 * (q.qs + q.qt) + bessel;
}

inline double q_density(const QMatrix& q, double beta, double lambda, int k, const Eigen::Matrix2d& omega,
                        double beta0) {
  return std::exp(log_q_density(q, beta, lambda, k, omega, beta0));
}

struct StructuralImage {
  double delta = 0.0;
  double lambda = 0.0;
  Eigen::Matrix2d psi;
  Eigen::Matrix2d gamma;
};

/// Action of lower-triangular g2 = [[g11, 0], [g21, g22]] on (Delta, lambda, Psi)
/// with c = Delta g21 + g22: Delta' = Delta g11 / c, lambda' = c^2 lambda and
/// Psi' = Gamma Psi Gamma', Gamma = [[g11 g22 / c, 0], [g21, c]]. Omega = A Psi A'
/// with A = [[1, Delta], [0, 1]] is then carried to g2 Omega g2'.
inline StructuralImage structural_action(double delta, double lambda, const Eigen::Matrix2d& psi,
                                         const Eigen::Matrix2d& g2) {
  if (g2(0, 1) != 0.0) throw InvalidInput("g2 must be lower triangular");
  const double c = delta * g2(1, 0) + g2(1, 1);
  if (c == 0.0) throw InvalidInput("structural_action: Delta g21 + g22 = 0");
  StructuralImage out;
  out.delta = delta * g2(0, 0) / c;
  out.lambda = c * c * lambda;
  out.gamma << g2(0, 0) * g2(1, 1) / c, 0.0, g2(1, 0), c;
  out.psi = out.gamma * psi * out.gamma.transpose();
  return out;
}

/// Omega = A Psi A' with A = [[1, beta], [0, 1]].
inline Eigen::Matrix2d reduced_from_structural(double beta, const Eigen::Matrix2d& psi) {
  Eigen::Matrix2d a;
  a << 1.0, beta, 0.0, 1.0;
  return a * psi * a.transpose();
}

struct NearestKronecker {
  Eigen::Matrix2d omega0;
  Matrix phi;  // det 1
  Matrix residual;
  double residual_norm = 0.0;
  Eigen::Vector4d singular_values = Eigen::Vector4d::Zero();
};

/// Rows vec(Sigma_ij)' for blocks (1,1), (2,1), (1,2), (2,2).
inline Matrix kron_rearrange(const Matrix& sigma0) {
  if (sigma0.rows() != sigma0.cols() || sigma0.rows() % 2 != 0 || sigma0.rows() == 0)
    throw InvalidInput("Sigma0 must be 2k x 2k");
  const Eigen::Index k = sigma0.rows() / 2;
  Matrix out(4, k * k);
  for (int j = 0; j < 2; ++j)
    for (int i = 0; i < 2; ++i) {
      const Matrix blk = sigma0.block(i * k, j * k, k, k);
      out.row(j * 2 + i) = Eigen::Map<const Vector>(blk.data(), k * k).transpose();
    }
  return out;
}

/// Frobenius-nearest Omega0 kron Phi via the dominant singular triple of the
/// block rearrangement; Phi scaled to det 1.
inline NearestKronecker nearest_kronecker(const Matrix& sigma0) {
  const Matrix r = kron_rearrange(sigma0);
  const Eigen::Index k = sigma0.rows() / 2;
  Eigen::JacobiSVD<Matrix> svd(r, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sv = svd.singularValues();
  if (!(sv(0) > 0.0)) throw NumericError("nearest_kronecker: zero dominant singular value");
  Vector u = svd.matrixU().col(0) * sv(0);
  Vector v = svd.matrixV().col(0);
  Matrix phi = symmetrize(Eigen::Map<const Matrix>(v.data(), k, k));
  if (phi.trace() < 0.0) {
    phi = -phi;
    u = -u;
  }
  const double det = phi.determinant();
  if (!(det > 0.0)) throw NumericError("nearest_kronecker: Phi factor is not positive definite");
  const double scale = std::pow(det, -1.0 / static_cast<double>(k));
  NearestKronecker out;
  out.phi = phi * scale;
  Eigen::Matrix2d om;
  om << u(0), u(2), u(1), u(3);
  out.omega0 = 0.5 * (om + om.transpose()) / scale;
  out.residual = sigma0 - kron(out.omega0, out.phi);
  out.residual_norm = out.residual.norm();
  for (Eigen::Index i = 0; i < std::min<Eigen::Index>(4, sv.size()); ++i) out.singular_values(i) = sv(i);
  return out;
}

struct InvariantCoordinates {
  bool degenerate = false;  // Gamma bar is zero; only gram is meaningful
  Matrix rbar;              // h11' Rbar0
  std::array<Matrix, 4> gamma;  // h11' Gamma bar_ij h11 for (1,1), (2,1), (1,2), (2,2)
  Vector lambda11;          // eigenvalues of Gamma bar_11, descending
  Eigen::Matrix2d gram;     // Rbar0' Rbar0
};

/// Coordinates from given lower-triangular factors Omega0 = Lw Lw' and Phi = Lp Lp'.
/// Any factors related to the Cholesky ones by g-transport give the same result.
inline InvariantCoordinates invariant_coordinates(const Matrix& r0, const Matrix& sigma0,
                                                  const Eigen::Matrix2d& omega_factor, const Matrix& phi_factor) {
  const Eigen::Index k = phi_factor.rows();
  if (r0.rows() != k || r0.cols() != 2 || sigma0.rows() != 2 * k || sigma0.cols() != 2 * k)
    throw InvalidInput("invariant_coordinates: dimension mismatch");
  const Matrix lp_inv = phi_factor.inverse();
  const Eigen::Matrix2d lw_inv = omega_factor.inverse();
  const Matrix rbar = lp_inv * r0 * lw_inv.transpose();
  const Matrix omega0 = omega_factor * omega_factor.transpose();
  const Matrix phi = phi_factor * phi_factor.transpose();
  const Matrix w = kron(lw_inv, lp_inv);
  const Matrix gbar = symmetrize(w * (sigma0 - kron(omega0, phi)) * w.transpose());

  InvariantCoordinates out;
  out.gram = rbar.transpose() * rbar;
  const double scale = std::max(1.0, max_abs(sigma0));
  if (max_abs(gbar) <= 1e-12 * scale) {
    out.degenerate = true;
    out.rbar = rbar;
    return out;
  }
  const Matrix g11 = gbar.topLeftCorner(k, k);
  Eigen::SelfAdjointEigenSolver<Matrix> es(g11);
  const Vector ev = es.eigenvalues();
  const double amax = ev.cwiseAbs().maxCoeff(), amin = ev.cwiseAbs().minCoeff();
  if (!(amin > 0.0) || amax / amin > 1e10)
    throw NumericError("invariant_coordinates: Gamma bar_11 is not invertible (condition number " +
                       std::to_string(amin > 0.0 ? amax / amin : std::numeric_limits<double>::infinity()) + ")");
  Matrix h(k, k);
  out.lambda11.resize(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    out.lambda11(i) = ev(k - 1 - i);
    h.col(i) = es.eigenvectors().col(k - 1 - i);
  }
  // Signs follow the data so they move with the orthogonal part of g1.
  for (Eigen::Index i = 0; i < k; ++i) {
    const double a = h.col(i).dot(rbar.col(0));
    const double b = h.col(i).dot(rbar.col(1));
    const double ref = std::abs(a) > 1e-12 * rbar.norm() ? a : b;
    if (ref < 0.0) h.col(i) = -h.col(i);
  }
  out.rbar = h.transpose() * rbar;
  for (int j = 0; j < 2; ++j)
    for (int i = 0; i < 2; ++i)
      out.gamma[static_cast<std::size_t>(j * 2 + i)] = h.transpose() * gbar.block(i * k, j * k, k, k) * h;
  return out;
}

/// Coordinates using the nearest Kronecker factors of Sigma0 and their Cholesky factors.
inline InvariantCoordinates invariant_coordinates(const Matrix& r0, const Matrix& sigma0) {
  const NearestKronecker nk = nearest_kronecker(sigma0);
  Eigen::LLT<Eigen::Matrix2d> lw(nk.omega0);
  Eigen::LLT<Matrix> lp(nk.phi);
  if (lw.info() != Eigen::Success || lp.info() != Eigen::Success)
    throw NumericError("invariant_coordinates: Kronecker factors are not positive definite");
  return invariant_coordinates(r0, sigma0, lw.matrixL().toDenseMatrix(), lp.matrixL().toDenseMatrix());
}

}  // namespace ivrobust
