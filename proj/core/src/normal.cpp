#include "pairscale/normal.hpp"

#include <cmath>

namespace pairscale {
namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kHalfLog2Pi = 0.91893853320467274178;

// Below this, erfc loses its lower tail and the asymptotic series takes over.
constexpr double kAsymptoticCut = -30.0;

// Tail series S(x) - 1 with Phi(x) = phi(x) / (-x) * S(x) for x << 0:
// S = 1 - 1/x^2 + 3/x^4 - 15/x^6 + ...
double tail_series_minus_one(double x) {
  const double inv_x2 = 1.0 / (x * x);
  double term = 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 16; ++k) {
    term *= -(2.0 * k - 1.0) * inv_x2;
    sum += term;
  }
  return sum;
}

double log_normal_pdf(double x) { return -0.5 * x * x - kHalfLog2Pi; }

}  // namespace

double normal_pdf(double x) { return std::exp(log_normal_pdf(x)); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }

double normal_sf(double x) { return 0.5 * std::erfc(x * kInvSqrt2); }

double normal_interval(double lo, double hi) {
  if (lo >= 0.0) return normal_sf(lo) - normal_sf(hi);
  if (hi <= 0.0) return normal_cdf(hi) - normal_cdf(lo);
  return 1.0 - (normal_cdf(lo) + normal_sf(hi));
}

double log_norm_cdf(double x) {
  if (x >= 0.0) return std::log1p(-normal_sf(x));
  if (x >= kAsymptoticCut) return std::log(normal_cdf(x));
  return log_normal_pdf(x) - std::log(-x) + std::log1p(tail_series_minus_one(x));
}

double inverse_mills_ratio(double x) {
  if (x >= kAsymptoticCut) return std::exp(log_normal_pdf(x) - log_norm_cdf(x));
  return -x / (1.0 + tail_series_minus_one(x));
}

double log_norm_cdf_curvature(double x) {
  if (x >= kAsymptoticCut) {
    const double r = inverse_mills_ratio(x);
    return -r * (x + r);
  }
  // x + r = x (S - 1) / S, evaluated without cancellation.
  const double s_minus_one = tail_series_minus_one(x);
  const double s = 1.0 + s_minus_one;
  const double r = -x / s;
  return -r * (x * s_minus_one / s);
}

}  // namespace pairscale
