#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ivrobust/conditional.hpp"
#include "ivrobust/errors.hpp"
#include "ivrobust/linalg.hpp"
#include "ivrobust/model.hpp"
#include "ivrobust/quadrature.hpp"
#include "ivrobust/random.hpp"
#include "ivrobust/statistics.hpp"

namespace ivrobust {

/// (g1, g2) acting by R0 -> g1 R0 g2' and Sigma0 -> (g2 kron g1) Sigma0 (g2' kron g1').
/// g2 is stored lower triangular, [[g11, 0], [g21, g22]].
struct GroupElement {
  Matrix g1;
  Eigen::Matrix2d g2 = Eigen::Matrix2d::Identity();

  static GroupElement identity(Eigen::Index k) { return {Matrix::Identity(k, k), Eigen::Matrix2d::Identity()}; }

  void validate() const {
    if (g1.rows() != g1.cols() || g1.rows() == 0) throw InvalidInput("g1 must be square");
    if (!(std::abs(g1.determinant()) > 1e-10)) throw InvalidInput("g1 is singular");
    if (g2(0, 1) != 0.0) throw InvalidInput("g2 must be lower triangular");
    if (g2(0, 0) == 0.0 || g2(1, 1) == 0.0) throw InvalidInput("g2 must have a nonzero diagonal");
  }
};

/// (g o h) acts as g after h.
inline GroupElement compose(const GroupElement& g, const GroupElement& h) { return {g.g1 * h.g1, g.g2 * h.g2}; }

inline GroupElement inverse(const GroupElement& g) { return {g.g1.inverse(), g.g2.inverse()}; }

struct Multiplier {
  double chi1 = 1.0;  // |g1|^2
  double chi2 = 1.0;  // |g2|^k
  double chi = 1.0;
};

inline Matrix act_sigma(const GroupElement& g, const Matrix& sigma0) {
  const Matrix a = kron(g.g2, g.g1);
  return symmetrize(a * sigma0 * a.transpose());
}

inline NullProblem act_data(const GroupElement& g, const NullProblem& p) {
  g.validate();
  if (g.g1.rows() != p.k()) throw InvalidInput("g1 dimension does not match k");
  return {g.g1 * p.r0 * g.g2.transpose(), act_sigma(g, p.sigma0), p.beta0};
}

/// Delta' = Delta g11 / c, mu' = c g1 mu with c = Delta g21 + g22.
inline ModelParams act_params(const GroupElement& g, const ModelParams& p) {
  g.validate();
  if (g.g1.rows() != p.mu.size()) throw InvalidInput("g1 dimension does not match k");
  const double c = p.delta * g.g2(1, 0) + g.g2(1, 1);
  if (c == 0.0) throw InvalidInput("act_params: Delta g21 + g22 = 0, the transformed model is undefined");
  return {p.delta * g.g2(0, 0) / c, c * (g.g1 * p.mu), act_sigma(g, p.sigma0)};
}

inline Multiplier multiplier(const GroupElement& g, Eigen::Index k) {
  Multiplier m;
  const double d1 = g.g1.determinant();
  m.chi1 = d1 * d1;
  m.chi2 = std::pow(std::abs(g.g2.determinant()), static_cast<double>(k));
  m.chi = m.chi1 * m.chi2;
  return m;
}

/// Action on (S, T) for Kronecker Sigma0 with g1 = I: signs of g11 and g22.
inline STPair induced_st_action(const Eigen::Matrix2d& g2, const STPair& st) {
  return {(g2(0, 0) < 0.0 ? -1.0 : 1.0) * st.s, (g2(1, 1) < 0.0 ? -1.0 : 1.0) * st.t};
}

/// Factor by which the weight |Delta|^{k-2} dDelta x dmu transforms:
/// m(g o A) = |det g1| |g11|^{k-1} |g22| m(A).
inline double weight_multiplier(const GroupElement& g, Eigen::Index k) {
  return std::abs(g.g1.determinant()) * std::pow(std::abs(g.g2(0, 0)), static_cast<double>(k - 1)) *
         std::abs(g.g2(1, 1));
}

/// Random group element: g1 uniform on [-scale, scale] entries with
/// |det g1| > 0.1 scale^k and condition number below 1e4; g2 diagonal
/// uniform on [0.5, 2], g21 uniform on [-1, 1]; optional random diagonal signs.
inline GroupElement sample_group(Eigen::Index k, CounterStream& rng, double scale = 1.0, bool sign_flips = false) {
  if (k < 1 || !(scale > 0.0)) throw InvalidInput("sample_group: need k >= 1 and scale > 0");
  GroupElement g;
  bool ok = false;
  for (int attempt = 0; attempt < 10000 && !ok; ++attempt) {
    g.g1.resize(k, k);
    for (Eigen::Index i = 0; i < g.g1.size(); ++i) g.g1.data()[i] = rng.uniform(-scale, scale);
    const double det = std::abs(g.g1.determinant());
    if (!(det > 0.1 * std::pow(scale, static_cast<double>(k)))) continue;
    Eigen::JacobiSVD<Matrix> svd(g.g1);
    const Vector& sv = svd.singularValues();
    ok = sv(0) / sv(sv.size() - 1) < 1e4;
  }
  if (!ok) throw NumericError("sample_group: resample budget exceeded");
  g.g2 << rng.uniform(0.5, 2.0), 0.0, rng.uniform(-1.0, 1.0), rng.uniform(0.5, 2.0);
  if (sign_flips) {
    if (rng.uniform() < 0.5) g.g2(0, 0) = -g.g2(0, 0);
    if (rng.uniform() < 0.5) g.g2(1, 1) = -g.g2(1, 1);
  }
  return g;
}

struct WeightInvarianceReport {
  std::vector<double> measured;  // integral of F(g^{-1} theta) over integral of F(theta)
  std::vector<double> expected;  // weight_multiplier(g)
  double max_rel_error = 0.0;
};

namespace detail {

// Smooth bump exp(-1 / (1 - r^2)) on the ellipsoid centred at c with semi-axes s.
struct Bump {
  Eigen::Vector3d c;
  Eigen::Vector3d s;
  double operator()(double delta, double m1, double m2) const {
    const double a = (delta - c(0)) / s(0), b = (m1 - c(1)) / s(1), d = (m2 - c(2)) / s(2);
    const double r2 = a * a + b * b + d * d;
    return r2 < 1.0 ? std::exp(-1.0 / (1.0 - r2)) : 0.0;
  }
};

template <class F>
double tensor_gl3(F&& f, const Eigen::Vector3d& lo, const Eigen::Vector3d& hi, int panels) {
  const auto& gl = GaussLegendre<10>::get();
  std::vector<double> x[3], w[3];
  for (int d = 0; d < 3; ++d) {
    const double h = (hi(d) - lo(d)) / panels;
    for (int p = 0; p < panels; ++p) {
      const double c = lo(d) + (p + 0.5) * h;
      for (int i = 0; i < 10; ++i) {
        x[d].push_back(c + 0.5 * h * gl.x[i]);
        w[d].push_back(0.5 * h * gl.w[i]);
      }
    }
  }
  double total = 0.0;
  for (std::size_t i = 0; i < x[0].size(); ++i) {
    double si = 0.0;
    for (std::size_t j = 0; j < x[1].size(); ++j) {
      double sj = 0.0;
      for (std::size_t l = 0; l < x[2].size(); ++l) sj += w[2][l] * f(x[0][i], x[1][j], x[2][l]);
      si += w[1][j] * sj;
    }
    total += w[0][i] * si;
  }
  return total;
}

}  // namespace detail

/// Checks numerically, at k = 2, that the weight |Delta|^{k-2} dDelta x dmu is
/// relatively invariant: for smooth bumps F,
/// int F(g^{-1} o theta) m(dtheta) = weight_multiplier(g) int F(theta) m(dtheta).
inline WeightInvarianceReport relative_invariance_of_weight(const std::vector<GroupElement>& gs, int panels = 24) {
  // Delta supports stay inside |Delta| < 0.5 so sample_group elements never hit the pole.
  const std::vector<detail::Bump> bumps{{{0.2, 0.3, -0.2}, {0.2, 0.8, 0.6}},
                                        {{-0.25, 1.0, 0.5}, {0.15, 0.5, 0.9}},
                                        {{0.05, -0.6, 0.0}, {0.35, 0.7, 0.7}}};
  WeightInvarianceReport rep;
  for (const GroupElement& g : gs) {
    g.validate();
    if (g.g1.rows() != 2) throw InvalidInput("relative_invariance_of_weight works at k = 2");
    const GroupElement gi = inverse(g);
    const double l11 = g.g2(0, 0), l21 = g.g2(1, 0), l22 = g.g2(1, 1);
    for (const auto& f : bumps) {
      // image of the bump's support under g: Delta' monotone in Delta off the pole
      const double dlo = f.c(0) - f.s(0), dhi = f.c(0) + f.s(0);
      const double clo = dlo * l21 + l22, chi = dhi * l21 + l22;
      if (clo * chi <= 0.0) throw InvalidInput("bump support straddles the pole of the group action");
      const double a = dlo * l11 / clo, b = dhi * l11 / chi;
      Eigen::Vector3d lo, hi;
      lo(0) = std::min(a, b);
      hi(0) = std::max(a, b);
      // mu' = c g1 mu with c between clo and chi: the box of g1 mu scaled by both ends
      for (int i = 0; i < 2; ++i) {
        double centre = 0.0, radius = 0.0;
        for (int j = 0; j < 2; ++j) {
          centre += g.g1(i, j) * f.c(1 + j);
          radius += std::abs(g.g1(i, j)) * f.s(1 + j);
        }
        const double ends[4] = {clo * (centre - radius), clo * (centre + radius), chi * (centre - radius),
                                chi * (centre + radius)};
        lo(1 + i) = *std::min_element(ends, ends + 4);
        hi(1 + i) = *std::max_element(ends, ends + 4);
      }
      auto transformed = [&](double delta, double m1, double m2) {
        const double c = delta * gi.g2(1, 0) + gi.g2(1, 1);
        if (c == 0.0) return 0.0;
        const double u1 = c * (gi.g1(0, 0) * m1 + gi.g1(0, 1) * m2);
        const double u2 = c * (gi.g1(1, 0) * m1 + gi.g1(1, 1) * m2);
        return f(delta * gi.g2(0, 0) / c, u1, u2);
      };
      const Eigen::Vector3d flo = f.c - f.s, fhi = f.c + f.s;
      const double base = detail::tensor_gl3(f, flo, fhi, panels);
      const double moved = detail::tensor_gl3(transformed, lo, hi, panels);
      const double expect = weight_multiplier(g, 2);
      rep.measured.push_back(moved / base);
      rep.expected.push_back(expect);
      rep.max_rel_error = std::max(rep.max_rel_error, std::abs(moved / base - expect) / expect);
    }
  }
  return rep;
}

/// Random SPD 2k x 2k matrix A A' / (2k) + 0.5 I.
inline Matrix random_spd(Eigen::Index n, CounterStream& rng) {
  Matrix a(n, n);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = rng.normal();
  return symmetrize(a * a.transpose() / static_cast<double>(n) + 0.5 * Matrix::Identity(n, n));
}

/// Random null problem with data drawn at a random alternative.
inline NullProblem random_problem(Eigen::Index k, CounterStream& rng) {
  ModelParams p;
  p.sigma0 = random_spd(2 * k, rng);
  p.delta = rng.normal();
  p.mu = Vector(k);
  for (Eigen::Index i = 0; i < k; ++i) p.mu(i) = 2.0 * rng.normal();
  return {draw_r0(p, rng), p.sigma0, 0.0};
}

struct InvarianceReport {
  int k = 0;
  int pairs = 0;
  std::uint64_t seed = 0;
  int mc_reps = 0;
  double max_rel_dev_ar = 0.0;
  double max_rel_dev_lm = 0.0;
  double max_rel_dev_qlr = 0.0;
  double max_rel_dev_lr = 0.0;
  double max_il_ratio_spread = 0.0;  // over data sets sharing Sigma0 and g
  int decisions_compared = 0;
  int decisions_agree = 0;
};

inline double rel_dev(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

/// Property run over random (problem, g) pairs. Decisions use matched seeds
/// with mc_reps inner draws; set mc_reps = 0 to skip the decision check.
inline InvarianceReport check_invariance(Eigen::Index k, int pairs, std::uint64_t seed, int mc_reps = kMinMcReps,
                                         int il_datasets = 5) {
  InvarianceReport rep;
  rep.k = static_cast<int>(k);
  rep.pairs = pairs;
  rep.seed = seed;
  rep.mc_reps = mc_reps;
  for (int i = 0; i < pairs; ++i) {
    CounterStream rng = CounterStream::derive(seed, {tag_hash("invariance"), static_cast<std::uint64_t>(i)});
    const NullProblem p = random_problem(k, rng);
    const GroupElement g = sample_group(k, rng);
    const NullProblem q = act_data(g, p);
    const STPair a = compute_st(p), b = compute_st(q);
    rep.max_rel_dev_ar = std::max(rep.max_rel_dev_ar, rel_dev(ar(a.s), ar(b.s)));
    rep.max_rel_dev_lm = std::max(rep.max_rel_dev_lm, rel_dev(lm2(a.s, a.t, p.sigma0), lm2(b.s, b.t, q.sigma0)));
    rep.max_rel_dev_qlr = std::max(rep.max_rel_dev_qlr, rel_dev(qlr(a.s, a.t, p.sigma0), qlr(b.s, b.t, q.sigma0)));
    rep.max_rel_dev_lr = std::max(rep.max_rel_dev_lr, rel_dev(lr(p.r0, p.sigma0), lr(q.r0, q.sigma0)));
    if (k >= 2 && il_datasets > 1) {
      StatisticEvaluator ep(p.sigma0), eq(q.sigma0);
      double lo = 0.0, hi = 0.0;
      for (int d = 0; d < il_datasets; ++d) {
        ModelParams mp{rng.normal(), Vector(k), p.sigma0};
        for (Eigen::Index j = 0; j < k; ++j) mp.mu(j) = 2.0 * rng.normal();
        const Matrix r0 = draw_r0(mp, rng);
        const STPair sa = ep.geometry().st(r0);
        const STPair sb = eq.geometry().st(g.g1 * r0 * g.g2.transpose());
        const double log_ratio = eq.evaluate_internal({Statistic::il}, sb.s, sb.t) -
                                 ep.evaluate_internal({Statistic::il}, sa.s, sa.t);
        lo = d == 0 ? log_ratio : std::min(lo, log_ratio);
        hi = d == 0 ? log_ratio : std::max(hi, log_ratio);
      }
      rep.max_il_ratio_spread = std::max(rep.max_il_ratio_spread, std::expm1(hi - lo));
    }
    if (mc_reps > 0) {
      ConditionalTest cp(p.sigma0), cq(q.sigma0);
      for (Statistic s : {Statistic::ar, Statistic::lm, Statistic::qlr, Statistic::lr, Statistic::il}) {
        if (s == Statistic::il && k < 2) continue;
        const std::uint64_t inner = mix64(seed + 7919u * static_cast<std::uint64_t>(i));
        const bool da = cp.run({s}, a, 0.05, mc_reps, inner).reject;
        const bool db = cq.run({s}, b, 0.05, mc_reps, inner).reject;
        ++rep.decisions_compared;
        if (da == db) ++rep.decisions_agree;
      }
    }
  }
  return rep;
}

}  // namespace ivrobust
