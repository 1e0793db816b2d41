#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include <Eigen/QR>
#include <Eigen/SVD>

#include "ivrobust/conditional.hpp"
#include "ivrobust/errors.hpp"
#include "ivrobust/linalg.hpp"
#include "ivrobust/model.hpp"
#include "ivrobust/statistics.hpp"

namespace ivrobust {

/// Raw IV sample: y1 = y2 beta + u, y2 = Z pi + v2, optional exogenous W.
struct RawSample {
  Vector y1;
  Vector y2;
  Matrix z;
  Matrix w;  // n x p, p may be 0

  Eigen::Index n() const { return y1.size(); }
  Eigen::Index k() const { return z.cols(); }
  Eigen::Index p() const { return w.cols(); }
};

enum class Kernel { bartlett };

inline std::string_view kernel_name(Kernel) { return "bartlett"; }

inline Kernel parse_kernel(std::string_view name) {
  if (name == "bartlett") return Kernel::bartlett;
  throw InvalidInput("unknown kernel '" + std::string(name) + "' (supported: bartlett)");
}

struct HacEstimate {
  Matrix sigma_hat;
  int bandwidth = 0;
  Kernel kernel = Kernel::bartlett;
  bool psd_repaired = false;
};

struct ReducedFormEstimate {
  Matrix r;     // k x 2, (Z'Z)^{-1/2} Z'Y
  Matrix vhat;  // n x 2
  Matrix z;     // instruments after partialling out W
};

inline void check_full_rank(const Matrix& a, std::string_view what) {
  Eigen::JacobiSVD<Matrix> svd(a);
  const Vector& sv = svd.singularValues();
  if (sv.size() == 0 || !(sv(sv.size() - 1) > 1e-10 * sv(0)))
    throw InvalidInput(std::string(what) + " is rank deficient");
}

inline void validate(const RawSample& raw) {
  const Eigen::Index n = raw.n();
  if (raw.y2.size() != n || raw.z.rows() != n || (raw.w.size() > 0 && raw.w.rows() != n))
    throw InvalidInput("y1, y2, Z and W must have the same number of rows");
  if (raw.k() < 1) throw InvalidInput("Z needs at least one column");
  if (!(n > raw.k() + raw.p())) throw InvalidInput("need n > k + p observations");
  if (!raw.y1.allFinite() || !raw.y2.allFinite() || !raw.z.allFinite() || !raw.w.allFinite())
    throw InvalidInput("data contain non-finite values");
}

/// R = (Z'Z)^{-1/2} Z'Y and OLS residuals, after partialling W out of y1, y2 and Z.
inline ReducedFormEstimate reduced_form(const RawSample& raw) {
  validate(raw);
  const Eigen::Index n = raw.n();
  Matrix y(n, 2);
  y.col(0) = raw.y1;
  y.col(1) = raw.y2;
  Matrix z = raw.z;
  if (raw.p() > 0) {
    check_full_rank(raw.w, "W");
    const Eigen::HouseholderQR<Matrix> qr(raw.w);
    const Matrix q = qr.householderQ() * Matrix::Identity(n, raw.p());
    y -= q * (q.transpose() * y);
    z -= q * (q.transpose() * z);
  }
  check_full_rank(z, "Z");
  const Matrix zz = symmetrize(z.transpose() * z);
  const Matrix zy = z.transpose() * y;
  const Eigen::LDLT<Matrix> ldlt(zz);
  ReducedFormEstimate out;
  out.r = spd_roots(zz, "Z'Z").inv_sqrt * zy;
  out.vhat = y - z * ldlt.solve(zy);
  out.z = std::move(z);
  return out;
}

/// floor(4 (n / 100)^{2/9}).
inline int auto_bandwidth(Eigen::Index n) {
  return static_cast<int>(std::floor(4.0 * std::pow(static_cast<double>(n) / 100.0, 2.0 / 9.0)));
}

/// Sigma_hat = (I2 kron (Z'Z)^{-1/2}) Omega_hat (I2 kron (Z'Z)^{-1/2}) with
/// Omega_hat = sum_{|l| <= L} (1 - |l| / L) sum_t x_t x_{t-l}', x_t = v_t kron z_t.
/// Eigenvalues below 1e-10 trace / 2k are clipped.
inline HacEstimate hac_sigma(const Matrix& z, const Matrix& vhat, Kernel kernel = Kernel::bartlett,
                             std::optional<int> bandwidth = std::nullopt) {
  const Eigen::Index n = z.rows(), k = z.cols();
  if (vhat.rows() != n || vhat.cols() != 2) throw InvalidInput("Vhat must be n x 2 matching Z");
  const int lags = bandwidth ? *bandwidth : auto_bandwidth(n);
  if (lags < 0) throw InvalidInput("bandwidth must be non-negative");
  if (!(n > 2 * lags)) throw InvalidInput("need n > 2 * bandwidth");
  if (vhat.cwiseAbs().maxCoeff() == 0.0) throw InvalidInput("residuals are identically zero");

  Matrix x(n, 2 * k);
  x.leftCols(k) = z.array().colwise() * vhat.col(0).array();
  x.rightCols(k) = z.array().colwise() * vhat.col(1).array();
  Matrix omega = x.transpose() * x;
  for (int l = 1; l < lags; ++l) {
    const double w = 1.0 - static_cast<double>(l) / lags;
    const Matrix g = x.bottomRows(n - l).transpose() * x.topRows(n - l);
    omega += w * (g + g.transpose());
  }
  const Matrix zz_is = spd_roots(symmetrize(z.transpose() * z), "Z'Z").inv_sqrt;
  const Matrix m = kron(Matrix::Identity(2, 2), zz_is);

  HacEstimate out;
  out.kernel = kernel;
  out.bandwidth = lags;
  out.sigma_hat = symmetrize(m * omega * m);
  const double floor = 1e-10 * out.sigma_hat.trace() / static_cast<double>(2 * k);
  Eigen::SelfAdjointEigenSolver<Matrix> es(out.sigma_hat);
  if (es.eigenvalues().minCoeff() < floor) {
    const Vector ev = es.eigenvalues().cwiseMax(floor);
    out.sigma_hat = symmetrize(es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose());
    out.psd_repaired = true;
  }
  return out;
}

/// Null problem with Sigma replaced by its HAC estimate.
struct FeasibleProblem {
  NullProblem problem;
  HacEstimate hac;
  Matrix r;
};

inline FeasibleProblem feasible_problem(const RawSample& raw, double beta0, Kernel kernel = Kernel::bartlett,
                                        std::optional<int> bandwidth = std::nullopt) {
  const ReducedFormEstimate rf = reduced_form(raw);
  HacEstimate hac = hac_sigma(rf.z, rf.vhat, kernel, bandwidth);
  NullProblem p = build_null_problem(rf.r, hac.sigma_hat, beta0);
  return {std::move(p), std::move(hac), rf.r};
}

inline TestResult feasible_test(const RawSample& raw, double beta0, const StatSpec& spec, double alpha = 0.05,
                                int m = kDefaultMcReps, std::uint64_t seed = 0, Kernel kernel = Kernel::bartlett,
                                std::optional<int> bandwidth = std::nullopt) {
  return run_test(feasible_problem(raw, beta0, kernel, bandwidth).problem, spec, alpha, m, seed);
}

}  // namespace ivrobust
