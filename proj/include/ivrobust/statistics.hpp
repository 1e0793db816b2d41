#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include "ivrobust/errors.hpp"
#include "ivrobust/linalg.hpp"
#include "ivrobust/model.hpp"
#include "ivrobust/profile_likelihood.hpp"

namespace ivrobust {

enum class Statistic { ar, lm, lm1, qlr, clc, lr, il };

inline constexpr std::array<Statistic, 7> kAllStatistics{Statistic::ar,  Statistic::lm, Statistic::lm1, Statistic::qlr,
                                                         Statistic::clc, Statistic::lr, Statistic::il};

inline std::string_view statistic_name(Statistic s) {
  switch (s) {
    case Statistic::ar: return "ar";
    case Statistic::lm: return "lm";
    case Statistic::lm1: return "lm1";
    case Statistic::qlr: return "qlr";
    case Statistic::clc: return "clc";
    case Statistic::lr: return "lr";
    case Statistic::il: return "il";
  }
  return "?";
}

inline Statistic parse_statistic(std::string_view name) {
  for (Statistic s : kAllStatistics)
    if (statistic_name(s) == name) return s;
  throw InvalidInput("unknown statistic '" + std::string(name) + "' (expected ar, lm, lm1, qlr, clc, lr or il)");
}

/// C_{beta0} and D_beta.
struct CDMatrices {
  Matrix c;
  Matrix d;
};

/// C_{beta0} = [(b0' kron I) Sigma (b0 kron I)]^{-1/2} and
/// D_beta = [(a0' kron I) Sigma^{-1} (a0 kron I)]^{-1/2} (a0' kron I) Sigma^{-1} (a kron I).
/// Evaluated through the blocks of Sigma0, where the two reduce to
/// Sigma0_11^{-1/2} and Schur^{-1/2} (I - (beta - beta0) Sigma0_21 Sigma0_11^{-1}).
inline CDMatrices cd_matrices(const Matrix& sigma, double beta, double beta0) {
  const Eigen::Index k = sigma.rows() / 2;
  const NullGeometry g(congruence_2x2(null_rotation(beta0), sigma));
  return {g.sigma11_inv_sqrt(),
          g.schur_inv_sqrt() * (Matrix::Identity(k, k) - (beta - beta0) * g.regression())};
}

inline double ar(const Vector& s) { return s.squaredNorm(); }

inline double lm_from_direction(const Vector& s, const Vector& v) {
  const double vv = v.squaredNorm();
  if (vv == 0.0) return 0.0;
  const double sv = s.dot(v);
  return sv * sv / vv;
}

inline double lm1_from_direction(const Vector& s, const Vector& v) {
  const double vn = v.norm();
  return vn == 0.0 ? 0.0 : s.dot(v) / vn;
}

inline void check_st(const Vector& s, const Vector& t, const NullGeometry& g) {
  if (s.size() != g.k() || t.size() != g.k()) throw InvalidInput("S and T must have length k matching Sigma0");
}

/// Two-sided LM: S' N_v S with v = C D^{-1} T at the null; 0 when v = 0.
inline double lm2(const Vector& s, const Vector& t, const Matrix& sigma0) {
  const NullGeometry g(sigma0);
  check_st(s, t, g);
  return lm_from_direction(s, g.lm_map() * t);
}

/// One-sided LM; lm1^2 == lm2.
inline double lm1(const Vector& s, const Vector& t, const Matrix& sigma0) {
  const NullGeometry g(sigma0);
  check_st(s, t, g);
  return lm1_from_direction(s, g.lm_map() * t);
}

inline double qlr_from(double ar_value, double lm_value, double rt) {
  const double d = ar_value - rt;
  return 0.5 * (d + std::sqrt(d * d + 4.0 * lm_value * rt));
}

inline double qlr(const Vector& s, const Vector& t, const Matrix& sigma0) {
  return qlr_from(ar(s), lm2(s, t, sigma0), t.squaredNorm());
}

inline double check_clc_weight(double m) {
  if (!(m >= 0.0 && m <= 1.0)) throw InvalidInput("CLC weight m(T) must lie in [0, 1]");
  return m;
}

inline double clc_from(double ar_value, double lm_value, double m) {
  check_clc_weight(m);
  return m * (ar_value - lm_value) + (1.0 - m) * ar_value;
}

inline double clc(const Vector& s, const Vector& t, const Matrix& sigma0, double m) {
  return clc_from(ar(s), lm2(s, t, sigma0), m);
}

inline double clc(const Vector& s, const Vector& t, const Matrix& sigma0, const std::function<double(const Vector&)>& m) {
  return clc(s, t, sigma0, m(t));
}

inline double lr_st(const Vector& s, const Vector& t, const Matrix& sigma0) {
  const NullGeometry g(sigma0);
  check_st(s, t, g);
  ProfileLikelihood pl(g);
  return pl.lr(s, t);
}

/// Likelihood ratio statistic from R0; T is recomputed from R0 and Sigma0.
inline double lr(const Matrix& r0, const Matrix& sigma0) {
  const NullGeometry g(sigma0);
  const STPair st = g.st(r0);
  ProfileLikelihood pl(g);
  return pl.lr(st.s, st.t);
}

inline double log_il_st(const Vector& s, const Vector& t, const Matrix& sigma0, double rtol = 1e-8) {
  const NullGeometry g(sigma0);
  check_st(s, t, g);
  ProfileLikelihood pl(g);
  return pl.log_il(s, t, rtol);
}

/// Integrated likelihood statistic with weight |Delta|^{k-2} dDelta (k >= 2).
inline double il(const Matrix& r0, const Matrix& sigma0, double rtol = 1e-8) {
  const NullGeometry g(sigma0);
  if (g.k() < 2) throw InvalidInput("IL requires k >= 2; use AR when k = 1");
  const STPair st = g.st(r0);
  ProfileLikelihood pl(g);
  return std::exp(pl.log_il(st.s, st.t, rtol));
}

/// (E S, E T) = (Delta C mu, D_beta mu) in R0 coordinates.
inline std::pair<Vector, Vector> mean_st(const ModelParams& p) {
  const NullGeometry g(p.sigma0);
  if (p.mu.size() != g.k()) throw InvalidInput("mu must have length k");
  const Eigen::Index k = g.k();
  Vector es = p.delta * (g.sigma11_inv_sqrt() * p.mu);
  Vector et = g.schur_inv_sqrt() * ((Matrix::Identity(k, k) - p.delta * g.regression()) * p.mu);
  return {es, et};
}

/// A statistic together with its CLC weight (ignored by the others).
struct StatSpec {
  Statistic id = Statistic::ar;
  double clc_m = 0.5;
};

/// Evaluates statistics repeatedly against one Sigma0, reusing the block
/// factorization and the profile-likelihood caches. IL is returned on the
/// log scale by evaluate_internal, which is what the conditional machinery
/// compares; evaluate() reports it on the natural scale.
class StatisticEvaluator {
 public:
  explicit StatisticEvaluator(const Matrix& sigma0) : geom_(sigma0), lm_map_(geom_.lm_map()) {}

  const NullGeometry& geometry() const { return geom_; }

  double evaluate_internal(const StatSpec& spec, const Vector& s, const Vector& t) {
    switch (spec.id) {
      case Statistic::ar: return ar(s);
      case Statistic::lm: return lm_from_direction(s, lm_map_ * t);
      case Statistic::lm1: return lm1_from_direction(s, lm_map_ * t);
      case Statistic::qlr: return qlr_from(ar(s), lm_from_direction(s, lm_map_ * t), t.squaredNorm());
      case Statistic::clc: return clc_from(ar(s), lm_from_direction(s, lm_map_ * t), spec.clc_m);
      case Statistic::lr: return profile().lr(s, t);
      case Statistic::il:
        if (geom_.k() < 2) throw InvalidInput("IL requires k >= 2; use AR when k = 1");
        return profile().log_il(s, t);
    }
    throw InvalidInput("unknown statistic");
  }

  double evaluate(const StatSpec& spec, const Vector& s, const Vector& t) {
    const double v = evaluate_internal(spec, s, t);
    return spec.id == Statistic::il ? std::exp(v) : v;
  }

  ProfileLikelihood& profile() {
    if (!profile_) profile_ = std::make_unique<ProfileLikelihood>(geom_);
    return *profile_;
  }

 private:
  NullGeometry geom_;
  Matrix lm_map_;
  std::unique_ptr<ProfileLikelihood> profile_;
};

}  // namespace ivrobust
