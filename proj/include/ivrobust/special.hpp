#pragma once

#include <cmath>
#include <numbers>

#include <boost/math/distributions/non_central_chi_squared.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "ivrobust/errors.hpp"

namespace ivrobust {

inline double chi2_cdf(double x, double dof) {
  if (x <= 0.0) return 0.0;
  return boost::math::gamma_p(0.5 * dof, 0.5 * x);
}

inline double chi2_sf(double x, double dof) {
  if (x <= 0.0) return 1.0;
  return boost::math::gamma_q(0.5 * dof, 0.5 * x);
}

inline double chi2_quantile(double p, double dof) {
  if (!(p > 0.0 && p < 1.0)) throw InvalidInput("chi2_quantile: probability must lie in (0, 1)");
  return 2.0 * boost::math::gamma_p_inv(0.5 * dof, p);
}

/// P(X > x) for X ~ noncentral chi-square(dof, ncp).
inline double ncx2_sf(double x, double dof, double ncp) {
  if (ncp < 0.0) throw InvalidInput("ncx2_sf: noncentrality must be non-negative");
  if (x <= 0.0) return 1.0;
  if (ncp == 0.0) return chi2_sf(x, dof);
  boost::math::non_central_chi_squared_distribution<double> d(dof, ncp);
  return boost::math::cdf(boost::math::complement(d, x));
}

/// log I_nu(x) for x > 0, nu >= 0. Uses the large-argument expansion above 500
/// where the direct value overflows.
inline double log_bessel_i(double nu, double x) {
  if (!(x > 0.0)) throw InvalidInput("log_bessel_i: argument must be positive");
  if (x <= 500.0) return std::log(std::cyl_bessel_i(nu, x));
  const double mu = 4.0 * nu * nu;
  double term = 1.0;
  double sum = 1.0;
  for (int j = 1; j <= 12; ++j) {
    const double odd = 2.0 * j - 1.0;
    term *= -(mu - odd * odd) / (j * 8.0 * x);
    sum += term;
    if (std::abs(term) < 1e-17 * std::abs(sum)) break;
  }
  return x - 0.5 * std::log(2.0 * std::numbers::pi * x) + std::log(sum);
}

}  // namespace ivrobust
