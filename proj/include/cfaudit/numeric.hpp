#pragma once

#include <cmath>
#include <span>
#include <vector>

namespace cfaudit {

inline double expit(double eta) {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p) - std::log1p(-p); }

/// log(1 + exp(eta)) without overflow.
inline double softplus(double eta) {
  return eta > 0.0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
}

inline double clamp_probability(double p, double lo, double hi) { return p < lo ? lo : (p > hi ? hi : p); }

/// Empirical quantile with linear interpolation between order statistics (Hyndman-Fan type 7).
/// `sorted` must be non-empty and ascending.
double quantile_sorted(std::span<const double> sorted, double prob);
/// Copies, sorts and calls quantile_sorted.
double quantile(std::span<const double> values, double prob);

/// Standard normal quantile (Wichura's AS 241, relative accuracy about 1e-16).
double normal_quantile(double p);

double mean(std::span<const double> values);
/// Sample variance with denominator (n - 1); 0 when n < 2.
double sample_variance(std::span<const double> values);

}  // namespace cfaudit
