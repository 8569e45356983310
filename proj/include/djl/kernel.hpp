#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <sstream>
#include <utility>
#include <vector>

#include "djl/errors.hpp"
#include "djl/rng.hpp"

namespace djl {

/// Hyperparameters of one arc-cosine (deep network) kernel family:
/// bias variance, weight variance and recursion depth. Depth 0 is the
/// linear-kernel base case.
struct KernelParams {
  double sigma_bias_sq = 0.05;
  double sigma_weight_sq = 0.05;
  int depth = 1;

  void validate() const {
    if (!(sigma_bias_sq > 0.0) || !(sigma_weight_sq > 0.0)) {
      throw ShapeMismatch("KernelParams: variances must be positive");
    }
    if (depth < 0) throw ShapeMismatch("KernelParams: depth must be >= 0");
  }
};

/// Strictly increasing finite time stamps.
struct TimeGrid {
  std::vector<double> times;

  TimeGrid() = default;
  explicit TimeGrid(std::vector<double> t) : times(std::move(t)) { validate(); }

  /// Integer grid 1, 2, ..., n.
  static TimeGrid regular(int n) {
    std::vector<double> t(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) t[static_cast<std::size_t>(i)] = i + 1.0;
    return TimeGrid(std::move(t));
  }

  int size() const { return static_cast<int>(times.size()); }
  double operator[](int i) const { return times[static_cast<std::size_t>(i)]; }

  void validate() const {
    if (times.empty()) throw ShapeMismatch("TimeGrid: empty");
    for (std::size_t i = 0; i < times.size(); ++i) {
      if (!std::isfinite(times[i])) throw ShapeMismatch("TimeGrid: non-finite");
      if (i > 0 && !(times[i] > times[i - 1])) {
        throw ShapeMismatch("TimeGrid: not strictly increasing");
      }
    }
  }

  bool operator==(const TimeGrid& other) const { return times == other.times; }
};

/// Symmetric covariance matrix over a time grid.
struct CovMatrix {
  TimeGrid grid;
  Eigen::MatrixXd values;
};

/// kappa_0(t_i, t_j) = sigma_c^2 + sigma_g^2 t_i t_j. The product is grouped
/// (t_i t_j) first so swapping arguments is bit-exact.
inline double kappa_base(double ti, double tj, const KernelParams& p) {
  return p.sigma_bias_sq + p.sigma_weight_sq * (ti * tj);
}

/// Depth-F ReLU arc-cosine recursion over kappa_base. The diagonal entries
/// follow kappa_f(t,t) = sigma_c^2 + sigma_g^2 kappa_{f-1}(t,t)/2 exactly
/// (angle zero), and the arccos argument is clamped to [-1, 1].
inline double kappa_recursive(double ti, double tj, const KernelParams& p) {
  double kii = kappa_base(ti, ti, p);
  double kjj = kappa_base(tj, tj, p);
  double kij = kappa_base(ti, tj, p);
  for (int f = 0; f < p.depth; ++f) {
    const double scale = std::sqrt(kii * kjj);
    const double ratio = std::clamp(kij / scale, -1.0, 1.0);
    const double gamma = std::acos(ratio);
    kij = p.sigma_bias_sq +
          p.sigma_weight_sq * scale *
              (std::sin(gamma) + (M_PI - gamma) * std::cos(gamma)) /
              (2.0 * M_PI);
    kii = p.sigma_bias_sq + p.sigma_weight_sq * kii / 2.0;
    kjj = p.sigma_bias_sq + p.sigma_weight_sq * kjj / 2.0;
  }
  return kij;
}

namespace detail {

/// Cholesky with a jitter escalation ladder. Each step adds
/// rel * mean(diagonal) to the diagonal, multiplying rel by 10 from
/// `first_rel` up to `last_rel`, then throws FactorizationFailure.
inline Eigen::LLT<Eigen::MatrixXd> chol_with_escalation(
    const Eigen::MatrixXd& m, double first_rel, double last_rel) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() == Eigen::Success) return llt;
  const double n = static_cast<double>(m.rows());
  // near-zero matrices (exact GP interpolation residuals) get an absolute
  // floor so the ladder can regularize them
  const double scale =
      std::max(m.diagonal().cwiseAbs().sum() / n, 1.0);
  for (double rel = first_rel; rel <= last_rel * (1.0 + 1e-12); rel *= 10.0) {
    Eigen::MatrixXd bumped = m;
    bumped.diagonal().array() += rel * scale;
    llt.compute(bumped);
    if (llt.info() == Eigen::Success) return llt;
  }
  std::ostringstream os;
  os << "Cholesky failed after jitter escalation to " << last_rel
     << " x mean diagonal (dim " << m.rows() << ")";
  throw FactorizationFailure(os.str());
}

}  // namespace detail

/// Kernel matrix over `grid` with `jitter` added to the diagonal. The result
/// is verified factorizable, escalating jitter (1e-8 to 1e-4 relative to the
/// mean diagonal) before giving up with FactorizationFailure.
inline CovMatrix build_cov(const TimeGrid& grid, const KernelParams& params,
                           double jitter) {
  grid.validate();
  params.validate();
  const int n = grid.size();
  Eigen::MatrixXd k(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      const double v = kappa_recursive(grid[i], grid[j], params);
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  k.diagonal().array() += jitter;
  detail::chol_with_escalation(k, 1e-8, 1e-4);
  return CovMatrix{grid, std::move(k)};
}

/// mean + L z with L a lower-triangular factor of cov; jitter escalation
/// 1e-10 to 1e-6 (relative to the mean diagonal) on factorization failure.
inline Eigen::VectorXd sample_mvn(const Eigen::VectorXd& mean,
                                  const Eigen::MatrixXd& cov, Rng& rng) {
  if (mean.size() != cov.rows() || cov.rows() != cov.cols()) {
    throw ShapeMismatch("sample_mvn: dimension mismatch");
  }
  const auto llt = detail::chol_with_escalation(cov, 1e-10, 1e-6);
  Eigen::VectorXd z(mean.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
  return mean + llt.matrixL() * z;
}

inline Eigen::VectorXd sample_mvn(const Eigen::VectorXd& mean,
                                  const CovMatrix& cov, Rng& rng) {
  return sample_mvn(mean, cov.values, rng);
}

struct GpConditional {
  Eigen::VectorXd mean;
  CovMatrix cov;
};

/// Conditional law of the zero-mean GP at `new_times` given observations on
/// `obs_grid`: mean = K*^T (K + jitter I)^-1 y, cov = K** - K*^T (K + jitter I)^-1 K*.
inline GpConditional gp_condition(const TimeGrid& obs_grid,
                                  const Eigen::VectorXd& obs_values,
                                  const TimeGrid& new_times,
                                  const KernelParams& params, double jitter) {
  obs_grid.validate();
  new_times.validate();
  if (obs_values.size() != obs_grid.size()) {
    throw ShapeMismatch("gp_condition: observation length mismatch");
  }
  const int n = obs_grid.size();
  const int m = new_times.size();
  Eigen::MatrixXd k(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      const double v = kappa_recursive(obs_grid[i], obs_grid[j], params);
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  k.diagonal().array() += jitter;
  Eigen::MatrixXd kstar(n, m);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      kstar(i, j) = kappa_recursive(obs_grid[i], new_times[j], params);
    }
  }
  Eigen::MatrixXd kss(m, m);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j <= i; ++j) {
      const double v = kappa_recursive(new_times[i], new_times[j], params);
      kss(i, j) = v;
      kss(j, i) = v;
    }
  }
  const auto llt = detail::chol_with_escalation(k, 1e-10, 1e-6);
  const Eigen::MatrixXd w = llt.solve(kstar);  // K^-1 K*
  GpConditional out;
  out.mean = w.transpose() * obs_values;
  Eigen::MatrixXd c = kss - kstar.transpose() * w;
  c = 0.5 * (c + c.transpose());  // symmetrize fp residue
  out.cov = CovMatrix{new_times, std::move(c)};
  return out;
}

}  // namespace djl
