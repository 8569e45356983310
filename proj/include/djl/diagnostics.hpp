#pragma once

#include <cmath>
#include <vector>

namespace djl {

/// Effective sample size by initial-monotone-sequence truncation of the
/// autocorrelation sums (Geyer). A (near-)constant chain reports ESS = N.
inline double effective_sample_size(const std::vector<double>& chain) {
  const int n = static_cast<int>(chain.size());
  if (n < 4) return static_cast<double>(n);
  double mean = 0.0;
  for (double v : chain) mean += v;
  mean /= n;
  std::vector<double> c(chain.size());
  for (int i = 0; i < n; ++i) c[i] = chain[i] - mean;
  auto gamma = [&](int lag) {
    double s = 0.0;
    for (int i = 0; i + lag < n; ++i) s += c[i] * c[i + lag];
    return s / n;
  };
  const double g0 = gamma(0);
  if (!(g0 > 0.0)) return static_cast<double>(n);

  double tau = 0.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (int m = 0; 2 * m + 1 < n; ++m) {
    double pair = gamma(2 * m) + gamma(2 * m + 1);
    if (pair <= 0.0) break;           // initial positive sequence
    if (pair > prev_pair) pair = prev_pair;  // enforce monotone decrease
    prev_pair = pair;
    tau += 2.0 * pair / g0;
  }
  tau -= 1.0;  // the lag-0 term is counted twice in the first pair
  if (tau < 1e-12) tau = 1e-12;
  return n / tau;
}

}  // namespace djl
