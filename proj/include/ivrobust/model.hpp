#pragma once

#include <cmath>
#include <numbers>
#include <sstream>
#include <string>

#include "ivrobust/errors.hpp"
#include "ivrobust/linalg.hpp"
#include "ivrobust/random.hpp"

namespace ivrobust {

/// R = (Z'Z)^{-1/2} Z'Y with Sigma = Var(vec of the standardized reduced-form errors).
struct ReducedForm {
  Matrix r;      // k x 2
  Matrix sigma;  // 2k x 2k
  Eigen::Index k() const { return r.rows(); }
};

/// Data recentred at the hypothesised beta0: R0 = R B0, Sigma0 = (B0' kron I) Sigma (B0 kron I).
struct NullProblem {
  Matrix r0;      // k x 2
  Matrix sigma0;  // 2k x 2k
  double beta0 = 0.0;
  Eigen::Index k() const { return r0.rows(); }
};

/// Pivotal statistic S and complete statistic T.
struct STPair {
  Vector s;
  Vector t;
};

/// Parameters in R0 coordinates: R0 ~ N(mu (Delta, 1), Sigma0).
struct ModelParams {
  double delta = 0.0;
  Vector mu;
  Matrix sigma0;
};

/// Block factorization of a 2k x 2k covariance Sigma0 = [[S11, S12], [S21, S22]].
///
/// Everything downstream (S, T, the profile likelihood, the density) only
/// needs S11 and the Schur complement S22 - S21 S11^{-1} S12, so the
/// eigenvalue floor is enforced on those two k x k blocks. This keeps designs
/// whose full Sigma0 has a condition number far beyond 1e12 (but whose blocks
/// are tame) usable at full accuracy.
///
/// The whitening map M = [[S11^{-1/2}, 0], [-Schur^{-1/2} B, Schur^{-1/2}]]
/// with B = S21 S11^{-1} satisfies M Sigma0 M' = I and [S; T] = M vec(R0).
class NullGeometry {
 public:
  explicit NullGeometry(const Matrix& sigma0) : sigma0_(sigma0) {
    if (sigma0.rows() != sigma0.cols() || sigma0.rows() < 2 || sigma0.rows() % 2 != 0) {
      throw InvalidInput("Sigma0 must be a 2k x 2k matrix");
    }
    if (!sigma0.allFinite()) throw InvalidInput("Sigma0 has non-finite entries");
    if (!is_symmetric(sigma0)) throw InvalidInput("Sigma0 is not symmetric");
    k_ = sigma0.rows() / 2;
    const Matrix s11 = symmetrize(sigma0.topLeftCorner(k_, k_));
    const Matrix s21 = sigma0.bottomLeftCorner(k_, k_);
    const Matrix s22 = symmetrize(sigma0.bottomRightCorner(k_, k_));
    try {
      const SpdRoots r11 = spd_roots(s11, "Sigma0 block (1,1)");
      s11_sqrt_ = r11.sqrt;
      s11_inv_sqrt_ = r11.inv_sqrt;
      Eigen::LLT<Matrix> llt(s11);
      regression_ = llt.solve(s21.transpose()).transpose();
      schur_ = symmetrize(s22 - regression_ * sigma0.topRightCorner(k_, k_));
      const SpdRoots rs = spd_roots(schur_, "Sigma0 Schur complement");
      schur_sqrt_ = rs.sqrt;
      schur_inv_sqrt_ = rs.inv_sqrt;
    } catch (const InvalidInput& e) {
      std::ostringstream os;
      os << "Sigma0 is not positive definite (min eigenvalue " << min_eigenvalue(sigma0) << "): " << e.what();
      throw InvalidInput(os.str());
    }
    log_det_ = 2.0 * (Eigen::LLT<Matrix>(s11).matrixLLT().diagonal().array().log().sum() +
                      Eigen::LLT<Matrix>(schur_).matrixLLT().diagonal().array().log().sum());
    whitening_ = Matrix::Zero(2 * k_, 2 * k_);
    whitening_.topLeftCorner(k_, k_) = s11_inv_sqrt_;
    whitening_.bottomLeftCorner(k_, k_) = -schur_inv_sqrt_ * regression_;
    whitening_.bottomRightCorner(k_, k_) = schur_inv_sqrt_;
  }

  Eigen::Index k() const { return k_; }
  const Matrix& sigma0() const { return sigma0_; }
  const Matrix& sigma11_sqrt() const { return s11_sqrt_; }
  const Matrix& sigma11_inv_sqrt() const { return s11_inv_sqrt_; }
  /// S22 - S21 S11^{-1} S12, the inverse of the (2,2) block of Sigma0^{-1}.
  const Matrix& schur() const { return schur_; }
  const Matrix& schur_sqrt() const { return schur_sqrt_; }
  const Matrix& schur_inv_sqrt() const { return schur_inv_sqrt_; }
  /// B = S21 S11^{-1}.
  const Matrix& regression() const { return regression_; }
  const Matrix& whitening() const { return whitening_; }
  double log_det() const { return log_det_; }

  Vector whiten(const Vector& x) const {
    Vector out(2 * k_);
    out.head(k_) = s11_inv_sqrt_ * x.head(k_);
    out.tail(k_) = schur_inv_sqrt_ * (x.tail(k_) - regression_ * x.head(k_));
    return out;
  }

  STPair st(const Matrix& r0) const {
    check_r0(r0);
    STPair out;
    out.s = s11_inv_sqrt_ * r0.col(0);
    out.t = schur_inv_sqrt_ * (r0.col(1) - regression_ * r0.col(0));
    return out;
  }

  Matrix r0(const STPair& st) const {
    Matrix out(k_, 2);
    out.col(0) = s11_sqrt_ * st.s;
    out.col(1) = schur_sqrt_ * st.t + regression_ * out.col(0);
    return out;
  }

  /// C_{beta0} D_{beta0}^{-1} in R0 coordinates; the LM direction is this map applied to T.
  Matrix lm_map() const { return s11_inv_sqrt_ * schur_sqrt_; }

  /// M (u kron I_k): the whitened column space spanned by mean vectors mu u'.
  Matrix direction_basis(double u1, double u2) const {
    Matrix g(2 * k_, k_);
    g.topRows(k_) = u1 * s11_inv_sqrt_;
    g.bottomRows(k_) = schur_inv_sqrt_ * (u2 * Matrix::Identity(k_, k_) - u1 * regression_);
    return g;
  }

  double condition_number() const {
    Eigen::JacobiSVD<Matrix> svd(whitening_);
    const Vector& sv = svd.singularValues();
    return sv(0) / sv(sv.size() - 1);
  }

 private:
  void check_r0(const Matrix& r0) const {
    if (r0.rows() != k_ || r0.cols() != 2) throw InvalidInput("R0 must be k x 2 matching Sigma0");
  }

  Matrix sigma0_;
  Eigen::Index k_ = 0;
  Matrix s11_sqrt_, s11_inv_sqrt_, schur_, schur_sqrt_, schur_inv_sqrt_, regression_, whitening_;
  double log_det_ = 0.0;
};

inline void check_reduced_form_shapes(const Matrix& r, const Matrix& sigma) {
  if (r.cols() != 2 || r.rows() < 1) throw InvalidInput("R must be k x 2");
  if (sigma.rows() != 2 * r.rows() || sigma.cols() != 2 * r.rows()) {
    throw InvalidInput("Sigma must be 2k x 2k with k = rows(R)");
  }
  if (!r.allFinite()) throw InvalidInput("R has non-finite entries");
}

inline NullProblem build_null_problem(const Matrix& r, const Matrix& sigma, double beta0) {
  check_reduced_form_shapes(r, sigma);
  const Eigen::Matrix2d b0 = null_rotation(beta0);
  NullProblem p{r * b0, congruence_2x2(b0, sigma), beta0};
  NullGeometry validate(p.sigma0);
  return p;
}

inline STPair compute_st(const NullProblem& p) { return NullGeometry(p.sigma0).st(p.r0); }

inline STPair compute_st(const Matrix& r, const Matrix& sigma, double beta0) {
  return compute_st(build_null_problem(r, sigma, beta0));
}

/// Inverse of the S/T map in R0 coordinates.
inline Matrix st_to_r0(const STPair& st, const Matrix& sigma0) {
  NullGeometry g(sigma0);
  if (st.s.size() != g.k() || st.t.size() != g.k()) throw InvalidInput("S and T must have length k");
  const double cond = g.condition_number();
  if (!(cond <= 1e12)) {
    std::ostringstream os;
    os << "S/T map is ill-conditioned (condition number " << cond << ")";
    throw NumericError(os.str());
  }
  return g.r0(st);
}

inline Matrix mean_r0(const ModelParams& p) {
  Matrix m(p.mu.size(), 2);
  m.col(0) = p.delta * p.mu;
  m.col(1) = p.mu;
  return m;
}

inline double log_density_r(const Matrix& r0, const ModelParams& p) {
  NullGeometry g(p.sigma0);
  if (r0.rows() != g.k() || r0.cols() != 2 || p.mu.size() != g.k()) {
    throw InvalidInput("density: dimensions of r0, mu and Sigma0 disagree");
  }
  const Vector d = vec(r0 - mean_r0(p));
  const double k = static_cast<double>(g.k());
  return -k * std::log(2.0 * std::numbers::pi) - 0.5 * g.log_det() - 0.5 * g.whiten(d).squaredNorm();
}

inline double density_r(const Matrix& r0, const ModelParams& p) { return std::exp(log_density_r(r0, p)); }

/// Symmetric square root without the inverse-root floor: draws only need
/// F F' = Sigma0, so nearly singular designs are acceptable here.
inline Matrix psd_sqrt(const Matrix& a) {
  if (!is_symmetric(a)) throw InvalidInput("covariance is not symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(a));
  const Vector ev = es.eigenvalues().cwiseMax(0.0);
  if (es.eigenvalues()(0) < -1e-10 * std::max(1.0, std::abs(es.eigenvalues()(ev.size() - 1)))) {
    throw InvalidInput("covariance is not positive semi-definite");
  }
  return es.eigenvectors() * ev.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

/// Draws R0 ~ N(mu (Delta, 1), Sigma0) with a precomputed symmetric factor.
class R0Sampler {
 public:
  explicit R0Sampler(ModelParams p) : params_(std::move(p)) {
    if (params_.sigma0.rows() != 2 * params_.mu.size() || params_.sigma0.cols() != params_.sigma0.rows()) {
      throw InvalidInput("draw_r0: Sigma0 must be 2k x 2k with k = length(mu)");
    }
    factor_ = psd_sqrt(params_.sigma0);
    mean_ = mean_r0(params_);
  }

  Matrix draw(CounterStream& rng) const {
    Vector z(factor_.rows());
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
    return mean_ + unvec(factor_ * z, mean_.rows());
  }

  const ModelParams& params() const { return params_; }

 private:
  ModelParams params_;
  Matrix factor_;
  Matrix mean_;
};

inline Matrix draw_r0(const ModelParams& p, CounterStream& rng) { return R0Sampler(p).draw(rng); }

}  // namespace ivrobust
