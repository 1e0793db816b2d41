#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <queue>
#include <vector>

#include "ivrobust/errors.hpp"

namespace ivrobust {

/// Gauss-Legendre nodes and weights on [-1, 1].
template <int N>
struct GaussLegendre {
  std::array<double, N> x{};
  std::array<double, N> w{};

  GaussLegendre() {
    for (int i = 0; i < N; ++i) {
      double z = std::cos(std::numbers::pi * (i + 0.75) / (N + 0.5));
      double dp = 0.0;
      for (int it = 0; it < 100; ++it) {
        double p0 = 1.0, p1 = z;
        for (int n = 2; n <= N; ++n) {
          const double p2 = ((2.0 * n - 1.0) * z * p1 - (n - 1.0) * p0) / n;
          p0 = p1;
          p1 = p2;
        }
        dp = N * (z * p1 - p0) / (z * z - 1.0);
        const double dz = p1 / dp;
        z -= dz;
        if (std::abs(dz) < 1e-16) break;
      }
      x[i] = -z;
      w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
  }

  static const GaussLegendre& get() {
    static const GaussLegendre rule;
    return rule;
  }
};

struct QuadratureResult {
  double value = 0.0;
  double error = 0.0;
  int panels = 0;
};

/// Globally adaptive composite 10-point Gauss-Legendre. Each panel is
/// compared with the sum over its two halves; the worst panel is split until
/// the summed discrepancy falls below rtol * |integral| (or atol).
template <class F>
QuadratureResult integrate(F&& f, double a, double b, double rtol = 1e-10, double atol = 0.0,
                           int initial_panels = 4, int max_panels = 20000) {
  const auto& gl = GaussLegendre<10>::get();
  auto rule = [&](double lo, double hi) {
    const double c = 0.5 * (lo + hi), h = 0.5 * (hi - lo);
    double s = 0.0;
    for (int i = 0; i < 10; ++i) s += gl.w[i] * f(c + h * gl.x[i]);
    return s * h;
  };
  struct Panel {
    double lo, hi, coarse, fine, err;
    bool operator<(const Panel& o) const { return err < o.err; }
  };
  auto make = [&](double lo, double hi, double coarse) {
    const double mid = 0.5 * (lo + hi);
    const double fine = rule(lo, mid) + rule(mid, hi);
    return Panel{lo, hi, coarse, fine, std::abs(fine - coarse)};
  };
  std::priority_queue<Panel> heap;
  double total = 0.0, err = 0.0;
  for (int i = 0; i < initial_panels; ++i) {
    const double lo = a + (b - a) * i / initial_panels;
    const double hi = a + (b - a) * (i + 1) / initial_panels;
    Panel p = make(lo, hi, rule(lo, hi));
    total += p.fine;
    err += p.err;
    heap.push(p);
  }
  int count = initial_panels;
  while (err > std::max(atol, rtol * std::abs(total))) {
    if (count >= max_panels) throw NumericError("integrate: panel budget exhausted before reaching tolerance");
    Panel p = heap.top();
    heap.pop();
    const double mid = 0.5 * (p.lo + p.hi);
    const double half = p.fine;
    Panel left = make(p.lo, mid, rule(p.lo, mid));
    Panel right = make(mid, p.hi, rule(mid, p.hi));
    total += left.fine + right.fine - half;
    err += left.err + right.err - p.err;
    heap.push(left);
    heap.push(right);
    ++count;
  }
  return {total, err, count};
}

}  // namespace ivrobust
