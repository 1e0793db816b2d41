#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <queue>
#include <unordered_map>
#include <vector>

#include "ivrobust/errors.hpp"
#include "ivrobust/model.hpp"
#include "ivrobust/optimize.hpp"
#include "ivrobust/quadrature.hpp"

namespace ivrobust {

/// Number of points on the direction grid used by LR and IL.
inline constexpr int kThetaGrid = 512;

/// Grid angle theta_i = -pi/2 + (i + 1) pi / 512, so theta = 0 and pi/2 are both on the grid.
inline double theta_grid(int i) { return -0.5 * std::numbers::pi + (i + 1) * std::numbers::pi / kThetaGrid; }

/// Orthonormal frame for the complement of the whitened span of
/// mu (sin t, cos t)'.
///
/// With z = [S; T], the residual of z off that span is N1 S + N2 T, and the
/// profile quadratic form satisfies q(theta) - T'T = S'S - |N1 S + N2 T|^2.
/// Working with the residual avoids cancelling q against T'T when T is large.
/// log_weight holds -1/2 log|(u' kron I) Sigma0^{-1} (u kron I)| + (k - 2) log|sin theta|.
struct DirectionFactors {
  Matrix n1;
  Matrix n2;
  double log_weight = 0.0;
};

/// Profile likelihood over the direction a = (Delta, 1)' parameterized as
/// Delta = tan(theta). Holds per-Sigma0 caches (the direction grid and the
/// quadrature panels) and the most recently bound T, so one instance should
/// be reused for many S draws against the same Sigma0. Not thread-safe.
class ProfileLikelihood {
 public:
  explicit ProfileLikelihood(const NullGeometry& geom)
      : k_(geom.k()),
        s11_inv_sqrt_(geom.sigma11_inv_sqrt()),
        schur_inv_sqrt_(geom.schur_inv_sqrt()),
        schur_inv_sqrt_b_(geom.schur_inv_sqrt() * geom.regression()) {
    grid_n1_.resize(kThetaGrid * k_, k_);
    grid_n2_.resize(kThetaGrid * k_, k_);
    grid_logw_.resize(kThetaGrid);
    for (int i = 0; i < kThetaGrid; ++i) {
      DirectionFactors f = factors(theta_grid(i));
      grid_n1_.middleRows(i * k_, k_) = f.n1;
      grid_n2_.middleRows(i * k_, k_) = f.n2;
      grid_logw_(i) = f.log_weight;
    }
  }

  Eigen::Index k() const { return k_; }

  DirectionFactors factors(double theta) const {
    switch (k_) {
      case 1: return factors_impl<1>(theta);
      case 2: return factors_impl<2>(theta);
      case 3: return factors_impl<3>(theta);
      case 4: return factors_impl<4>(theta);
      default: return factors_impl<Eigen::Dynamic>(theta);
    }
  }

  /// Squared residual of [S; T] off the direction theta (no caching).
  double residual2(double theta, const Vector& s, const Vector& t) const {
    switch (k_) {
      case 1: return residual2_impl<1>(theta, s, t);
      case 2: return residual2_impl<2>(theta, s, t);
      case 3: return residual2_impl<3>(theta, s, t);
      case 4: return residual2_impl<4>(theta, s, t);
      default: return residual2_impl<Eigen::Dynamic>(theta, s, t);
    }
  }

  /// q(theta) - T'T at an arbitrary angle.
  double profile_gain(double theta, const Vector& s, const Vector& t) const {
    return s.squaredNorm() - residual2(theta, s, t);
  }

  /// Binds T; grid and panel terms that depend on T are refreshed lazily.
  void bind(const Vector& t) {
    if (t.size() != k_) throw InvalidInput("T must have length k");
    if (bound_ && t == t_) return;
    t_ = t;
    grid_c_ = grid_n2_ * t;
    ++epoch_;
    bound_ = true;
  }

  /// max over directions of q(theta) - T'T, floored at 0.
  double lr(const Vector& s, const Vector& t) {
    bind(t);
    check_s(s);
    scan(s);
    const Vector neg = -grid_r_;
    double best = neg.maxCoeff();
    for (int i : peaks_to_refine(neg)) {
      const Maximum m = refine_on_grid([&](double th) { return -residual2(th, s, t_); }, neg, i, 1e-10);
      best = std::max(best, m.value);
    }
    return std::max(s.squaredNorm() + best, 0.0);
  }

  /// log of the integral over theta in (-pi/2, pi/2) of
  /// |A(u)|^{-1/2} |sin theta|^{k-2} exp((q(theta) - T'T) / 2).
  double log_il(const Vector& s, const Vector& t, double rtol = 1e-8) {
    if (k_ < 2) throw InvalidInput("IL requires k >= 2");
    bind(t);
    check_s(s);
    if (cache_.size() > kMaxCachedPanels) cache_.clear();
    scan(s);
    ss_ = s.squaredNorm();
    const Vector logf = grid_logw_.array() + 0.5 * (ss_ - grid_r_.array());
    auto logf_at = [&](double th) { return log_integrand(th, s, t_); };

    // Panels are refined around each dominant peak until they are a few
    // peak widths wide, otherwise the nodes could step over a sharp peak.
    std::vector<std::pair<double, double>> peaks;  // (centre, width)
    double shift = logf.maxCoeff();
    const double cell = std::numbers::pi / kThetaGrid;
    for (int i : peaks_to_refine(logf)) {
      const Maximum m = refine_on_grid(logf_at, logf, i, 1e-7);
      if (!std::isfinite(m.value)) continue;
      shift = std::max(shift, m.value);
      const double w = peak_width(logf_at, m.x, m.value, cell);
      if (!std::isfinite(w)) continue;
      double x = m.x;
      if (x >= 0.5 * std::numbers::pi) x -= std::numbers::pi;
      if (x < -0.5 * std::numbers::pi) x += std::numbers::pi;
      // the integrand has period pi, so copies catch peaks straddling +-pi/2
      for (double off : {-std::numbers::pi, 0.0, std::numbers::pi}) peaks.emplace_back(x + off, w);
    }
    if (!std::isfinite(shift)) throw NumericError("IL: integrand is not finite on the direction grid");

    std::vector<Item> items;
    for (int h = 0; h < 2; ++h) cover(h, 0, 0, peaks, s, shift, items);

    double total = 0.0, err = 0.0;
    std::priority_queue<Item> heap;
    for (Item& it : items) {
      total += it.fine;
      err += it.err;
      heap.push(it);
    }
    int count = static_cast<int>(items.size());
    while (err > rtol * total) {
      if (count > kMaxPanels || heap.empty()) throw NumericError("IL quadrature did not converge");
      Item it = heap.top();
      heap.pop();
      Item left = child(it, 0, s, shift);
      Item right = child(it, 1, s, shift);
      total += left.fine + right.fine - it.fine;
      err += left.err + right.err - it.err;
      heap.push(left);
      heap.push(right);
      ++count;
    }
    if (!(total > 0.0)) throw NumericError("IL quadrature produced a non-positive value");
    return shift + std::log(total);
  }

  double il(const Vector& s, const Vector& t, double rtol = 1e-8) { return std::exp(log_il(s, t, rtol)); }

 private:
  static constexpr std::size_t kMaxCachedPanels = 1u << 15;
  static constexpr int kMaxPanels = 20000;
  static constexpr int kNodes = 10;
  static constexpr int kMinLevel = 2;
  static constexpr int kMaxLevel = 50;

  struct Panel {
    Matrix n1;  // stacked node factors, (kNodes k) x k
    Matrix n2;
    Eigen::Array<double, kNodes, 1> logw;
    Vector c;  // n2 * T for the bound T
    std::uint64_t epoch = 0;
  };

  // A quadrature panel: coarse is the rule on [lo, hi], fine the sum over its halves.
  struct Item {
    double lo = 0.0, hi = 0.0;
    int half = 0, level = 0;
    std::int64_t index = 0;
    double coarse = 0.0, fine = 0.0, err = 0.0;
    double coarse_left = 0.0, coarse_right = 0.0;
    bool operator<(const Item& o) const { return err < o.err; }
  };

  template <int K>
  Eigen::HouseholderQR<Eigen::Matrix<double, K == Eigen::Dynamic ? Eigen::Dynamic : 2 * K, K>> direction_qr(
      double theta) const {
    constexpr int K2 = K == Eigen::Dynamic ? Eigen::Dynamic : 2 * K;
    const double u1 = std::sin(theta), u2 = std::cos(theta);
    Eigen::Matrix<double, K2, K> g(2 * k_, k_);
    g.topRows(k_) = u1 * s11_inv_sqrt_;
    g.bottomRows(k_) = u2 * schur_inv_sqrt_ - u1 * schur_inv_sqrt_b_;
    return Eigen::HouseholderQR<Eigen::Matrix<double, K2, K>>(g);
  }

  template <int K>
  double residual2_impl(double theta, const Vector& s, const Vector& t) const {
    constexpr int K2 = K == Eigen::Dynamic ? Eigen::Dynamic : 2 * K;
    const auto qr = direction_qr<K>(theta);
    Eigen::Matrix<double, K2, 1> z(2 * k_);
    z.head(k_) = s;
    z.tail(k_) = t;
    z.applyOnTheLeft(qr.householderQ().transpose());
    return z.tail(k_).squaredNorm();
  }

  template <int K>
  DirectionFactors factors_impl(double theta) const {
    constexpr int K2 = K == Eigen::Dynamic ? Eigen::Dynamic : 2 * K;
    const auto qr = direction_qr<K>(theta);
    const Eigen::Matrix<double, K2, K2> q = qr.householderQ();
    DirectionFactors out;
    out.n1 = q.topRightCorner(k_, k_).transpose();
    out.n2 = q.bottomRightCorner(k_, k_).transpose();
    out.log_weight = log_weight(qr, theta);
    return out;
  }

  template <class QR>
  double log_weight(const QR& qr, double theta) const {
    double lw = -qr.matrixQR().diagonal().cwiseAbs().array().log().sum();
    if (k_ > 2) lw += (k_ - 2) * std::log(std::abs(std::sin(theta)));
    return lw;
  }

  template <int K>
  double log_integrand_impl(double theta, const Vector& s, const Vector& t) const {
    constexpr int K2 = K == Eigen::Dynamic ? Eigen::Dynamic : 2 * K;
    const auto qr = direction_qr<K>(theta);
    Eigen::Matrix<double, K2, 1> z(2 * k_);
    z.head(k_) = s;
    z.tail(k_) = t;
    z.applyOnTheLeft(qr.householderQ().transpose());
    return log_weight(qr, theta) + 0.5 * (s.squaredNorm() - z.tail(k_).squaredNorm());
  }

  double log_integrand(double theta, const Vector& s, const Vector& t) const {
    switch (k_) {
      case 1: return log_integrand_impl<1>(theta, s, t);
      case 2: return log_integrand_impl<2>(theta, s, t);
      case 3: return log_integrand_impl<3>(theta, s, t);
      case 4: return log_integrand_impl<4>(theta, s, t);
      default: return log_integrand_impl<Eigen::Dynamic>(theta, s, t);
    }
  }

  // Refines the grid local maximum i of f (grid values in fv) within its two neighbouring cells.
  template <class F>
  static Maximum refine_on_grid(F&& f, const Vector& fv, int i, double xtol) {
    return refine_maximum(f, theta_grid(i - 1), theta_grid(i + 1), {theta_grid(i), fv(i)},
                          {theta_grid(i - 1), fv(wrap(i - 1))}, {theta_grid(i + 1), fv(wrap(i + 1))}, xtol);
  }

  // Rise of the parabola through the grid values around i above fv(i); infinite if not concave.
  static double parabolic_rise(const Vector& fv, int i) {
    const double fm = fv(wrap(i - 1)), f0 = fv(i), fp = fv(wrap(i + 1));
    const double d = 2.0 * f0 - fm - fp;
    if (!(d > 0.0)) return std::numeric_limits<double>::infinity();
    return (fp - fm) * (fp - fm) / (8.0 * d);
  }

  // The best grid local maximum, plus the runner-up unless interpolation
  // could not plausibly lift it to the best grid value.
  static std::vector<int> peaks_to_refine(const Vector& fv) {
    std::vector<int> out = top_local_maxima(fv);
    if (out.size() == 2) {
      const double best = fv(out[0]), cand = fv(out[1]);
      if (cand + 4.0 * parabolic_rise(fv, out[1]) + 1e-12 * std::abs(best) < best) out.pop_back();
    }
    return out;
  }

  void check_s(const Vector& s) const {
    if (s.size() != k_) throw InvalidInput("S must have length k");
  }

  static int wrap(int c) { return ((c % kThetaGrid) + kThetaGrid) % kThetaGrid; }

  void scan(const Vector& s) {
    Vector y = grid_n1_ * s + grid_c_;
    grid_r_ = Eigen::Map<const Matrix>(y.data(), k_, kThetaGrid).colwise().squaredNorm().transpose();
  }

  // Indices of the (up to) two largest strict local maxima on the periodic grid.
  static std::vector<int> top_local_maxima(const Vector& f) {
    int best = -1, second = -1;
    for (int i = 0; i < kThetaGrid; ++i) {
      const double prev = f(wrap(i - 1)), next = f(wrap(i + 1));
      if (!(f(i) >= prev && f(i) > next) || !std::isfinite(f(i))) continue;
      if (best < 0 || f(i) > f(best)) {
        second = best;
        best = i;
      } else if (second < 0 || f(i) > f(second)) {
        second = i;
      }
    }
    std::vector<int> out;
    if (best >= 0) out.push_back(best);
    if (second >= 0) out.push_back(second);
    return out;
  }

  template <class F>
  static double peak_width(F& f, double x, double fx, double cell) {
    double h = cell / 8.0;
    double w = std::numeric_limits<double>::infinity();
    for (int it = 0; it < 6; ++it) {
      const double curv = -(f(x + h) - 2.0 * fx + f(x - h)) / (h * h);
      w = curv > 0.0 ? 1.0 / std::sqrt(curv) : std::numeric_limits<double>::infinity();
      if (!(h > 0.25 * w)) break;
      h = 0.25 * w;
    }
    return w;
  }

  static std::uint64_t key(int half, int level, std::int64_t index) {
    return (static_cast<std::uint64_t>(half) << 63) | (static_cast<std::uint64_t>(level) << 56) |
           static_cast<std::uint64_t>(index);
  }

  static double half_start(int half) { return half == 0 ? -0.5 * std::numbers::pi : 0.0; }

  Panel build_panel(double lo, double hi) const {
    const auto& gl = GaussLegendre<kNodes>::get();
    Panel p;
    p.n1.resize(kNodes * k_, k_);
    p.n2.resize(kNodes * k_, k_);
    const double c = 0.5 * (lo + hi), h = 0.5 * (hi - lo);
    for (int i = 0; i < kNodes; ++i) {
      DirectionFactors f = factors(c + h * gl.x[i]);
      p.n1.middleRows(i * k_, k_) = f.n1;
      p.n2.middleRows(i * k_, k_) = f.n2;
      p.logw(i) = f.log_weight;
    }
    p.c = p.n2 * t_;
    p.epoch = epoch_;
    return p;
  }

  const Panel& cached_panel(int half, int level, std::int64_t index) {
    auto [it, inserted] = cache_.try_emplace(key(half, level, index));
    if (inserted) {
      const double width = 0.5 * std::numbers::pi / std::ldexp(1.0, level);
      const double lo = half_start(half) + index * width;
      it->second = build_panel(lo, lo + width);
    } else if (it->second.epoch != epoch_) {
      it->second.c = it->second.n2 * t_;
      it->second.epoch = epoch_;
    }
    return it->second;
  }

  double panel_value(const Panel& p, double lo, double hi, const Vector& s, double shift) const {
    const auto& gl = GaussLegendre<kNodes>::get();
    const Vector y = p.n1 * s + p.c;
    const Eigen::Map<const Matrix> ym(y.data(), k_, kNodes);
    double sum = 0.0;
    for (int i = 0; i < kNodes; ++i) {
      const double lf = p.logw(i) + 0.5 * (ss_ - ym.col(i).squaredNorm()) - shift;
      sum += gl.w[i] * std::exp(lf);
    }
    return 0.5 * (hi - lo) * sum;
  }

  double rule(const Item& it, int which, const Vector& s, double shift) {
    // which: -1 whole panel, 0 left half, 1 right half
    const double mid = 0.5 * (it.lo + it.hi);
    const double lo = which == 1 ? mid : it.lo;
    const double hi = which == 0 ? mid : it.hi;
    const int level = which < 0 ? it.level : it.level + 1;
    const std::int64_t index = which < 0 ? it.index : 2 * it.index + which;
    return panel_value(cached_panel(it.half, level, index), lo, hi, s, shift);
  }

  void finish(Item& it, const Vector& s, double shift) {
    it.coarse_left = rule(it, 0, s, shift);
    it.coarse_right = rule(it, 1, s, shift);
    it.fine = it.coarse_left + it.coarse_right;
    it.err = std::abs(it.fine - it.coarse);
  }

  Item child(const Item& parent, int which, const Vector& s, double shift) {
    if (parent.level >= 55) throw NumericError("IL quadrature did not converge (panel depth exhausted)");
    Item c;
    const double mid = 0.5 * (parent.lo + parent.hi);
    c.lo = which == 0 ? parent.lo : mid;
    c.hi = which == 0 ? mid : parent.hi;
    c.half = parent.half;
    c.level = parent.level + 1;
    c.index = 2 * parent.index + which;
    c.coarse = which == 0 ? parent.coarse_left : parent.coarse_right;
    finish(c, s, shift);
    return c;
  }

  void add_item(Item it, const Vector& s, double shift, std::vector<Item>& items) {
    it.coarse = rule(it, -1, s, shift);
    finish(it, s, shift);
    items.push_back(it);
  }

  // Covers the dyadic cell (half, level, index) with cached panels, splitting
  // cells that overlap a peak until they are at most eight peak widths wide.
  void cover(int half, int level, std::int64_t index, const std::vector<std::pair<double, double>>& peaks,
             const Vector& s, double shift, std::vector<Item>& items) {
    const double width = 0.5 * std::numbers::pi / std::ldexp(1.0, level);
    const double lo = half_start(half) + index * width;
    bool split = level < kMinLevel;
    for (const auto& [x, w] : peaks) {
      split = split || (lo < x + 3.0 * w && lo + width > x - 3.0 * w && width > 8.0 * w);
    }
    if (split && level < kMaxLevel) {
      cover(half, level + 1, 2 * index, peaks, s, shift, items);
      cover(half, level + 1, 2 * index + 1, peaks, s, shift, items);
      return;
    }
    add_item(Item{lo, lo + width, half, level, index}, s, shift, items);
  }

  Eigen::Index k_;
  Matrix s11_inv_sqrt_, schur_inv_sqrt_, schur_inv_sqrt_b_;
  Matrix grid_n1_, grid_n2_;
  Vector grid_logw_, grid_c_, grid_r_;
  Vector t_;
  double ss_ = 0.0;
  bool bound_ = false;
  std::uint64_t epoch_ = 0;
  std::unordered_map<std::uint64_t, Panel> cache_;
};

}  // namespace ivrobust
