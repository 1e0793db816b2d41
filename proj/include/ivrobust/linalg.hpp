#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <string_view>

#include "ivrobust/errors.hpp"

namespace ivrobust {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Smallest admissible eigenvalue ratio min/max for any matrix we take an
/// inverse square root of.
inline constexpr double kEigenFloor = 1e-12;

/// Relative tolerance used when validating symmetry of covariance inputs.
inline constexpr double kSymmetryTol = 1e-12;

struct SpdRoots {
  Matrix sqrt;
  Matrix inv_sqrt;
  double min_eigenvalue = 0.0;
  double max_eigenvalue = 0.0;
};

inline double max_abs(const Matrix& a) { return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff(); }

inline bool is_symmetric(const Matrix& a, double rel_tol = kSymmetryTol) {
  if (a.rows() != a.cols()) return false;
  return max_abs(a - a.transpose()) <= rel_tol * std::max(1.0, max_abs(a));
}

inline Matrix symmetrize(const Matrix& a) { return 0.5 * (a + a.transpose()); }

inline double min_eigenvalue(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(a), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

inline std::string describe_eigen_failure(std::string_view what, double lo, double hi) {
  std::ostringstream os;
  os << what << " is not positive definite within the eigenvalue floor (min eigenvalue " << lo
     << ", max eigenvalue " << hi << ")";
  return os.str();
}

/// Symmetric PSD square root and inverse square root via eigendecomposition.
/// Throws InvalidInput if the matrix is not symmetric or its smallest
/// eigenvalue is below kEigenFloor times the largest.
inline SpdRoots spd_roots(const Matrix& a, std::string_view what = "matrix") {
  if (a.rows() != a.cols() || a.rows() == 0) {
    throw InvalidInput(std::string(what) + " must be a non-empty square matrix");
  }
  if (!a.allFinite()) throw InvalidInput(std::string(what) + " has non-finite entries");
  if (!is_symmetric(a)) throw InvalidInput(std::string(what) + " is not symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(a));
  const Vector& ev = es.eigenvalues();
  const double lo = ev(0);
  const double hi = ev(ev.size() - 1);
  if (!(hi > 0.0) || lo < kEigenFloor * hi) throw InvalidInput(describe_eigen_failure(what, lo, hi));
  const Matrix& v = es.eigenvectors();
  SpdRoots out;
  out.sqrt = v * ev.cwiseSqrt().asDiagonal() * v.transpose();
  out.inv_sqrt = v * ev.cwiseSqrt().cwiseInverse().asDiagonal() * v.transpose();
  out.min_eigenvalue = lo;
  out.max_eigenvalue = hi;
  return out;
}

inline Matrix sym_sqrt(const Matrix& a) { return spd_roots(a).sqrt; }
inline Matrix sym_inv_sqrt(const Matrix& a) { return spd_roots(a).inv_sqrt; }

inline Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

/// Column-stacking vec, so (A' kron I_k) vec(R) = vec(R A) for k x 2 R.
inline Vector vec(const Matrix& m) { return Eigen::Map<const Vector>(m.data(), m.size()); }

inline Matrix unvec(const Vector& v, Eigen::Index rows) {
  if (rows <= 0 || v.size() % rows != 0) throw InvalidInput("unvec: length is not a multiple of rows");
  return Eigen::Map<const Matrix>(v.data(), rows, v.size() / rows);
}

/// B0 = [[1, 0], [-beta0, 1]]; R0 = R B0 recentres the first column at the null.
inline Eigen::Matrix2d null_rotation(double beta0) {
  Eigen::Matrix2d b;
  b << 1.0, 0.0, -beta0, 1.0;
  return b;
}

/// (A' kron I_k) Sigma (A kron I_k) for a 2x2 A and a 2k x 2k Sigma.
inline Matrix congruence_2x2(const Eigen::Matrix2d& a, const Matrix& sigma) {
  const Eigen::Index k = sigma.rows() / 2;
  const Matrix big = kron(a, Matrix::Identity(k, k));
  return symmetrize(big.transpose() * sigma * big);
}

}  // namespace ivrobust
