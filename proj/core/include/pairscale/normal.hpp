#pragma once

namespace pairscale {

// Standard normal distribution kernels.
double normal_pdf(double x);
double normal_cdf(double x);
// Upper tail 1 - Phi(x), accurate for large positive x.
double normal_sf(double x);
// P(lo < Z <= hi) for lo <= hi, computed on the tail that avoids cancellation.
double normal_interval(double lo, double hi);

// ln Phi(x). Relative error below 1e-10 on [-8, 8]; finite and monotone far
// into the lower tail, where an asymptotic series replaces erfc.
double log_norm_cdf(double x);

// phi(x) / Phi(x), the derivative of log_norm_cdf.
double inverse_mills_ratio(double x);

}  // namespace pairscale

namespace pairscale {

// Second derivative of ln Phi(x): -r(x) (x + r(x)), r the inverse Mills ratio.
double log_norm_cdf_curvature(double x);

}  // namespace pairscale
