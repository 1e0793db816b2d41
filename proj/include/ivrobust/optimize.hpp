#pragma once

#include <cmath>
#include <limits>
#include <algorithm>
#include <array>
#include <utility>

namespace ivrobust {

struct Maximum {
  double x = 0.0;
  double value = -std::numeric_limits<double>::infinity();
};

/// Brent's method (golden-section steps with parabolic acceleration) for the
/// maximum of f on [a, b], optionally starting from an interior guess. Stops when the bracket is below
/// 2 * (sqrt(eps) * |x| + tol / 3), the usual resolution limit for a smooth
/// maximum in double precision.
struct BrentPoint {
  double x;
  double f;
};

/// Refines a maximum bracketed by [a, b] from three evaluated points by
/// successive parabolic interpolation, stopping once the step falls below
/// xtol. Falls back to Brent's method if the fit is not concave or leaves the
/// bracket.
template <class F>
Maximum refine_maximum(F&& f, double a, double b, BrentPoint p0, BrentPoint p1, BrentPoint p2, double xtol = 1e-10,
                       int max_iter = 60);

template <class F>
Maximum brent_maximize(F&& f, double a, double b, double tol = 1e-12, int max_iter = 200,
                       double start = std::numeric_limits<double>::quiet_NaN()) {
  constexpr double kGolden = 0.3819660112501051;
  const double sqrt_eps = std::sqrt(std::numeric_limits<double>::epsilon());
  auto g = [&](double x) {
    const double v = f(x);
    return std::isfinite(v) ? -v : std::numeric_limits<double>::max();
  };
  double x = (start > a && start < b) ? start : a + kGolden * (b - a);
  double w = x, v = x;
  double fx = g(x), fw = fx, fv = fx;
  double d = 0.0, e = 0.0;
  for (int iter = 0; iter < max_iter; ++iter) {
    const double xm = 0.5 * (a + b);
    const double tol1 = sqrt_eps * std::abs(x) + tol / 3.0;
    const double tol2 = 2.0 * tol1;
    if (std::abs(x - xm) <= tol2 - 0.5 * (b - a)) break;
    bool golden = true;
    if (std::abs(e) > tol1) {
      double r = (x - w) * (fx - fv);
      double q = (x - v) * (fx - fw);
      double p = (x - v) * q - (x - w) * r;
      q = 2.0 * (q - r);
      if (q > 0.0) p = -p;
      q = std::abs(q);
      const double etemp = e;
      e = d;
      if (std::abs(p) < std::abs(0.5 * q * etemp) && p > q * (a - x) && p < q * (b - x)) {
        d = p / q;
        const double u = x + d;
        if (u - a < tol2 || b - u < tol2) d = xm >= x ? tol1 : -tol1;
        golden = false;
      }
    }
    if (golden) {
      e = x >= xm ? a - x : b - x;
      d = kGolden * e;
    }
    const double u = x + (std::abs(d) >= tol1 ? d : (d > 0.0 ? tol1 : -tol1));
    const double fu = g(u);
    if (fu <= fx) {
      if (u >= x) a = x; else b = x;
      v = w; fv = fw;
      w = x; fw = fx;
      x = u; fx = fu;
    } else {
      if (u < x) a = u; else b = u;
      if (fu <= fw || w == x) {
        v = w; fv = fw;
        w = u; fw = fu;
      } else if (fu <= fv || v == x || v == w) {
        v = u; fv = fu;
      }
    }
  }
  return {x, fx == std::numeric_limits<double>::max() ? -std::numeric_limits<double>::infinity() : -fx};
}

template <class F>
Maximum refine_maximum(F&& f, double a, double b, BrentPoint p0, BrentPoint p1, BrentPoint p2, double xtol,
                       int max_iter) {
  std::array<BrentPoint, 3> pts{p0, p1, p2};
  for (int it = 0; it < max_iter; ++it) {
    std::sort(pts.begin(), pts.end(), [](const BrentPoint& l, const BrentPoint& r) { return l.f > r.f; });
    const auto [x0, f0] = pts[0];
    const auto [x1, f1] = pts[1];
    const auto [x2, f2] = pts[2];
    if (x0 == x1 || x0 == x2 || x1 == x2) break;
    const double s1 = (f1 - f0) / (x1 - x0), s2 = (f2 - f0) / (x2 - x0);
    const double curv = (s1 - s2) / (x1 - x2);
    if (!(curv < 0.0) || !std::isfinite(curv)) break;
    const double u = 0.5 * (x0 + x1) - s1 / (2.0 * curv);
    if (!(u > a && u < b)) break;
    if (std::abs(u - x0) < xtol) return {x0, f0};
    const double fu = f(u);
    if (fu > f0) {
      if (u > x0) a = x0; else b = x0;
    } else {
      if (u > x0) b = u; else a = u;
    }
    pts[2] = {u, fu};
  }
  const Maximum m = brent_maximize(f, a, b);
  std::sort(pts.begin(), pts.end(), [](const BrentPoint& l, const BrentPoint& r) { return l.f > r.f; });
  return m.value >= pts[0].f ? m : Maximum{pts[0].x, pts[0].f};
}

}  // namespace ivrobust
