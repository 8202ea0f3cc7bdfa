#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>

namespace spn {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// log(exp(a) + exp(b)) without overflow; -inf is the additive identity.
inline double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  const double lo = std::min(a, b);
  return hi + std::log1p(std::exp(lo - hi));
}

inline double log_sum_exp(std::span<const double> xs) {
  double m = kNegInf;
  for (double x : xs) m = std::max(m, x);
  if (m == kNegInf || m == kInf) return m;
  double acc = 0.0;
  for (double x : xs) acc += std::exp(x - m);
  return m + std::log(acc);
}

inline double safe_log(double x) { return x > 0.0 ? std::log(x) : kNegInf; }

inline double std_normal_pdf(double t) {
  if (!std::isfinite(t)) return 0.0;
  return std::exp(-0.5 * t * t) / std::sqrt(2.0 * std::numbers::pi);
}

/// Phi(t) evaluated through erfc so the lower tail keeps relative precision.
inline double std_normal_cdf(double t) { return 0.5 * std::erfc(-t / std::numbers::sqrt2); }

/// Upper tail 1 - Phi(t), accurate for large positive t.
inline double std_normal_sf(double t) { return 0.5 * std::erfc(t / std::numbers::sqrt2); }

/// Mass of the standard normal on [a, b], computed on the tail that avoids
/// cancellation.
inline double std_normal_mass(double a, double b) {
  if (!(a < b)) return 0.0;
  if (a > 0.0) return std_normal_sf(a) - std_normal_sf(b);
  if (b < 0.0) return std_normal_cdf(b) - std_normal_cdf(a);
  return 1.0 - std_normal_cdf(a) - std_normal_sf(b);
}

inline double gaussian_log_pdf(double x, double mean, double variance) {
  const double d = x - mean;
  return -0.5 * (std::log(2.0 * std::numbers::pi * variance) + d * d / variance);
}

inline double gaussian_log_interval_mass(double lo, double hi, double mean, double variance) {
  const double sd = std::sqrt(variance);
  return safe_log(std_normal_mass((lo - mean) / sd, (hi - mean) / sd));
}

}  // namespace spn
