#pragma once

#include <cmath>
#include <cstdint>

#include "djl/errors.hpp"
#include "djl/rng.hpp"

namespace djl {

/// E[PG(1, c)] = tanh(c/2) / (2c), with the analytic limit 1/4 at c = 0.
inline double pg1_mean(double c) {
  const double a = std::abs(c);
  if (a < 1e-6) return 0.25;
  return std::tanh(a / 2.0) / (2.0 * a);
}

namespace detail {

inline constexpr double kPgTrunc = 0.64;  // proposal split point

/// Piecewise coefficients of the alternating series for the Jacobi density.
inline double pg_series_coef(int n, double x) {
  const double h = n + 0.5;
  if (x > kPgTrunc) {
    return M_PI * h * std::exp(-h * h * M_PI * M_PI * x / 2.0);
  }
  return M_PI * h * std::pow(2.0 / (M_PI * x), 1.5) *
         std::exp(-2.0 * h * h / x);
}

/// log Phi(-a) for a >= 0, stable for large a.
inline double log_norm_cdf_neg(double a) {
  if (a < 30.0) return std::log(0.5 * std::erfc(a / std::sqrt(2.0)));
  // asymptotic tail: Phi(-a) ~ phi(a)/a
  return -0.5 * a * a - std::log(a) - 0.5 * std::log(2.0 * M_PI);
}

/// CDF of InverseGaussian(mu = 1/z, lambda = 1) at t, with the z = 0 limit.
inline double igauss_cdf(double t, double z) {
  const double rt = std::sqrt(t);
  if (z <= 0.0) return 2.0 * std::exp(log_norm_cdf_neg(1.0 / rt));
  const double a = (t * z - 1.0) / rt;
  const double b = (t * z + 1.0) / rt;
  double term1;
  if (a >= 0.0) {
    term1 = 1.0 - std::exp(log_norm_cdf_neg(a));
  } else {
    term1 = std::exp(log_norm_cdf_neg(-a));
  }
  const double term2 = std::exp(2.0 * z + log_norm_cdf_neg(b));
  return term1 + term2;
}

/// InverseGaussian(1/z, 1) truncated to (0, t].
/// budget counts proposals toward the caller's stall cap.
inline double trunc_inv_gauss(double z, double t, Rng& rng,
                              std::int64_t& budget) {
  if (z < 1.0 / t) {
    // mean beyond the truncation point: sample the (0, t] piece directly
    for (;;) {
      double e1, e2;
      do {
        if (--budget < 0) throw SamplerStall("PG sampler: truncated-IG stall");
        e1 = rng.exponential();
        e2 = rng.exponential();
      } while (e1 * e1 > 2.0 * e2 / t);
      const double x = t / ((1.0 + t * e1) * (1.0 + t * e1));
      if (rng.uniform() <= std::exp(-0.5 * z * z * x)) return x;
    }
  }
  const double mu = 1.0 / z;
  for (;;) {
    if (--budget < 0) throw SamplerStall("PG sampler: truncated-IG stall");
    double y = rng.normal();
    y = y * y;
    double x =
        mu + 0.5 * mu * mu * y - 0.5 * mu * std::sqrt(4.0 * mu * y + mu * mu * y * y);
    if (rng.uniform() > mu / (mu + x)) x = mu * mu / x;
    if (x <= t) return x;
  }
}

}  // namespace detail

/// Exact draw from PG(1, c) by the alternating-series rejection method on the
/// Jacobi density (exponential / inverse-Gaussian proposals split at 0.64).
/// The distribution depends on c only through |c|. A cap of 10^6 proposals
/// raises SamplerStall.
inline double sample_pg1(double c, Rng& rng) {
  const double z = std::abs(c) / 2.0;
  const double t = detail::kPgTrunc;
  const double big_k = M_PI * M_PI / 8.0 + z * z / 2.0;
  const double p = M_PI / (2.0 * big_k) * std::exp(-big_k * t);
  const double q = 2.0 * std::exp(-z) * detail::igauss_cdf(t, z);
  const double p_frac = p / (p + q);

  std::int64_t budget = 1000000;
  for (;;) {
    if (--budget < 0) throw SamplerStall("PG sampler: proposal cap exceeded");
    double x;
    if (rng.uniform() < p_frac) {
      x = t + rng.exponential() / big_k;
    } else {
      x = detail::trunc_inv_gauss(z, t, rng, budget);
    }
    // alternating-series squeeze on the Jacobi density at x
    double s = detail::pg_series_coef(0, x);
    const double y = rng.uniform() * s;
    for (int n = 1;; ++n) {
      if (n % 2 == 1) {
        s -= detail::pg_series_coef(n, x);
        if (y <= s) return 0.25 * x;
      } else {
        s += detail::pg_series_coef(n, x);
        if (y > s) break;
      }
      if (n > 1000) throw SamplerStall("PG sampler: series stall");
    }
  }
}

}  // namespace djl
