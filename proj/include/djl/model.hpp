#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "djl/data.hpp"
#include "djl/errors.hpp"
#include "djl/kernel.hpp"

namespace djl {

/// Candidate (sigma_bias_sq, sigma_weight_sq) pairs for the kernel
/// hyperparameter grid update. Default grid {0.01, 0.02, ..., 0.1}^2.
inline std::vector<std::pair<double, double>> default_hyper_grid() {
  std::vector<std::pair<double, double>> g;
  for (int i = 1; i <= 10; ++i) {
    for (int j = 1; j <= 10; ++j) {
      g.emplace_back(i * 0.01, j * 0.01);
    }
  }
  return g;
}

struct ModelConfig {
  int rank_shared = 4;  // R_zeta
  int rank_layer = 4;   // R
  int depth = 1;        // F
  std::vector<std::pair<double, double>> hyper_grid = default_hyper_grid();
  double a_sigma = 2.0;
  double b_sigma = 1.0;
  double jitter = 1e-8;
  int burn_in = 5000;
  int keep = 10000;
  int thin = 1;
  std::uint64_t seed = 1;
  // true: joint model (layer factors shared with attributes);
  // false: marginal ablation with an independent attribute-side factor copy.
  bool joint_mode = true;

  void validate() const {
    if (rank_shared < 1 || rank_layer < 1) {
      throw ConfigError("ranks must be >= 1");
    }
    if (depth < 0) throw ConfigError("depth must be >= 0");
    if (hyper_grid.empty()) throw ConfigError("hyper grid must be nonempty");
    if (burn_in < 0 || keep < 1 || thin < 1) {
      throw ConfigError("burn_in >= 0, keep >= 1, thin >= 1 required");
    }
    if (!(a_sigma > 0.0) || !(b_sigma > 0.0)) {
      throw ConfigError("inverse-gamma hyperparameters must be positive");
    }
    if (jitter < 0.0) throw ConfigError("jitter must be nonnegative");
  }
};

/// Rows of latent function values, one unit per row, time-major within each
/// row so T-length Gaussian updates are contiguous.
class FunctionTable {
 public:
  FunctionTable() = default;
  FunctionTable(int units, int times)
      : units_(units), times_(times),
        data_(static_cast<std::size_t>(units) * times, 0.0) {}

  int units() const { return units_; }
  int times() const { return times_; }

  Eigen::Map<Eigen::VectorXd> row(int u) {
    return {data_.data() + static_cast<std::size_t>(u) * times_,
            static_cast<Eigen::Index>(times_)};
  }
  Eigen::Map<const Eigen::VectorXd> row(int u) const {
    return {data_.data() + static_cast<std::size_t>(u) * times_,
            static_cast<Eigen::Index>(times_)};
  }

  double operator()(int u, int t) const {
    return data_[static_cast<std::size_t>(u) * times_ + t];
  }
  double& operator()(int u, int t) {
    return data_[static_cast<std::size_t>(u) * times_ + t];
  }

  const std::vector<double>& raw() const { return data_; }
  std::vector<double>& raw() { return data_; }

  bool operator==(const FunctionTable& o) const {
    return units_ == o.units_ && times_ == o.times_ && data_ == o.data_;
  }

 private:
  int units_ = 0;
  int times_ = 0;
  std::vector<double> data_;
};

/// One full configuration of all time-varying latent functions,
/// idiosyncratic variances, PG auxiliaries and kernel hyperparameters.
struct LatentState {
  int num_nodes = 0;   // J
  int num_layers = 0;  // L
  int num_attrs = 0;   // m
  int num_times = 0;   // T
  int rank_shared = 0; // R_zeta
  int rank_layer = 0;  // R

  Eigen::VectorXd mu;   // T
  FunctionTable eta;    // m x T
  FunctionTable zeta;   // (J * R_zeta) x T
  FunctionTable xi;     // (J * L * R) x T, graph side
  FunctionTable alpha;  // (m * L * R) x T
  // attribute-side layer factors; present only in marginal (non-joint) mode
  std::optional<FunctionTable> xi_attr;

  Eigen::VectorXd sigma2;      // m, > 0
  std::vector<double> omega;   // one entry per observed graph cell

  KernelParams beta_mu, beta_eta, beta_zeta, beta_xi, beta_alpha;
  // prior family of xi_attr in marginal mode
  KernelParams beta_xi_attr;

  static LatentState zeros(int J, int L, int m, int T, int R_zeta, int R,
                           bool joint_mode, int depth) {
    LatentState s;
    s.num_nodes = J;
    s.num_layers = L;
    s.num_attrs = m;
    s.num_times = T;
    s.rank_shared = R_zeta;
    s.rank_layer = R;
    s.mu = Eigen::VectorXd::Zero(T);
    s.eta = FunctionTable(m, T);
    s.zeta = FunctionTable(J * R_zeta, T);
    s.xi = FunctionTable(J * L * R, T);
    s.alpha = FunctionTable(m * L * R, T);
    if (!joint_mode) s.xi_attr = FunctionTable(J * L * R, T);
    s.sigma2 = Eigen::VectorXd::Ones(m);
    for (KernelParams* b : {&s.beta_mu, &s.beta_eta, &s.beta_zeta, &s.beta_xi,
                            &s.beta_alpha, &s.beta_xi_attr}) {
      b->depth = depth;
    }
    return s;
  }

  int zeta_row(int j, int r) const { return j * rank_shared + r; }
  int xi_row(int j, int l, int r) const {
    return (j * num_layers + l) * rank_layer + r;
  }
  int alpha_row(int k, int l, int r) const {
    return (k * num_layers + l) * rank_layer + r;
  }

  /// Layer factors that drive the attribute model: the graph-side xi in
  /// joint mode, the independent copy otherwise.
  const FunctionTable& attr_xi() const { return xi_attr ? *xi_attr : xi; }
  FunctionTable& attr_xi() { return xi_attr ? *xi_attr : xi; }
};

/// logit P(edge) = mu(t) + zeta_j' zeta_j'' + xi_{j,l}' xi_{j',l}.
inline double edge_linear_predictor(const LatentState& s, int j, int jp, int l,
                                    int t) {
  if (j == jp) throw IndexOutOfRange("edge predictor needs j != j'");
  if (j < 0 || j >= s.num_nodes || jp < 0 || jp >= s.num_nodes || l < 0 ||
      l >= s.num_layers || t < 0 || t >= s.num_times) {
    throw IndexOutOfRange("edge predictor index out of range");
  }
  double v = s.mu(t);
  for (int r = 0; r < s.rank_shared; ++r) {
    v += s.zeta(s.zeta_row(j, r), t) * s.zeta(s.zeta_row(jp, r), t);
  }
  for (int r = 0; r < s.rank_layer; ++r) {
    v += s.xi(s.xi_row(j, l, r), t) * s.xi(s.xi_row(jp, l, r), t);
  }
  return v;
}

/// E[x_{j,k}(t)] = eta_k(t) + sum_l xi_{j,l}(t)' alpha_{k,l}(t).
inline double attribute_mean(const LatentState& s, int j, int k, int t) {
  if (j < 0 || j >= s.num_nodes || k < 0 || k >= s.num_attrs || t < 0 ||
      t >= s.num_times) {
    throw IndexOutOfRange("attribute mean index out of range");
  }
  const FunctionTable& xi = s.attr_xi();
  double v = s.eta(k, t);
  for (int l = 0; l < s.num_layers; ++l) {
    for (int r = 0; r < s.rank_layer; ++r) {
      v += xi(s.xi_row(j, l, r), t) * s.alpha(s.alpha_row(k, l, r), t);
    }
  }
  return v;
}

inline double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// PG-augmented graph log likelihood: sum over observed dyad cells of
/// (a - 0.5) psi - omega psi^2 / 2. The PG(1,0) prior density of omega is
/// constant in all implemented conditionals and is omitted throughout.
inline double log_likelihood_graph(const LatentState& s,
                                   const MultiplexGraphSeries& graph) {
  double ll = 0.0;
  graph.for_each_observed([&](int, int j, int jp, int l, int t,
                              std::int8_t a, int slot) {
    const double psi = edge_linear_predictor(s, j, jp, l, t);
    ll += (a - 0.5) * psi - 0.5 * s.omega[static_cast<std::size_t>(slot)] *
                                psi * psi;
  });
  return ll;
}

/// Gaussian attribute log likelihood over mask-true cells.
inline double log_likelihood_attrs(const LatentState& s,
                                   const AttributeSeries& attrs) {
  double ll = 0.0;
  attrs.for_each_observed([&](int j, int k, int t, double x) {
    const double mean = attribute_mean(s, j, k, t);
    const double v = s.sigma2(k);
    const double r = x - mean;
    ll += -0.5 * std::log(2.0 * M_PI * v) - 0.5 * r * r / v;
  });
  return ll;
}

namespace detail {

/// Sum of N(v; 0, Sigma) log densities for a set of equally sized vectors.
template <typename RowSource>
double gaussian_prior_logdens(const RowSource& rows, int n_rows,
                              const TimeGrid& grid, const KernelParams& beta,
                              double jitter) {
  const CovMatrix cov = build_cov(grid, beta, jitter);
  const auto llt = chol_with_escalation(cov.values, 1e-10, 1e-6);
  const Eigen::MatrixXd l = llt.matrixL();
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < l.rows(); ++i) logdet += 2.0 * std::log(l(i, i));
  const double t = static_cast<double>(grid.size());
  double total = 0.0;
  for (int u = 0; u < n_rows; ++u) {
    const Eigen::VectorXd w = llt.matrixL().solve(rows(u));
    total += -0.5 * w.squaredNorm();
  }
  total += n_rows * (-0.5 * logdet - 0.5 * t * std::log(2.0 * M_PI));
  return total;
}

inline double table_prior_logdens(const FunctionTable& tbl,
                                  const TimeGrid& grid,
                                  const KernelParams& beta, double jitter) {
  return gaussian_prior_logdens(
      [&](int u) { return Eigen::VectorXd(tbl.row(u)); }, tbl.units(), grid,
      beta, jitter);
}

inline double inv_gamma_logdens(double x, double a, double b) {
  return a * std::log(b) - std::lgamma(a) - (a + 1.0) * std::log(x) - b / x;
}

}  // namespace detail

/// Log prior density of all latent function vectors under their kernel
/// families plus the inverse-gamma priors on the idiosyncratic variances.
inline double log_prior(const LatentState& s, const TimeGrid& grid,
                        const ModelConfig& config) {
  double lp = detail::gaussian_prior_logdens(
      [&](int) { return s.mu; }, 1, grid, s.beta_mu, config.jitter);
  lp += detail::table_prior_logdens(s.eta, grid, s.beta_eta, config.jitter);
  lp += detail::table_prior_logdens(s.zeta, grid, s.beta_zeta, config.jitter);
  lp += detail::table_prior_logdens(s.xi, grid, s.beta_xi, config.jitter);
  lp += detail::table_prior_logdens(s.alpha, grid, s.beta_alpha,
                                    config.jitter);
  if (s.xi_attr) {
    lp += detail::table_prior_logdens(*s.xi_attr, grid, s.beta_xi_attr,
                                      config.jitter);
  }
  for (int k = 0; k < s.num_attrs; ++k) {
    lp += detail::inv_gamma_logdens(s.sigma2(k), config.a_sigma,
                                    config.b_sigma);
  }
  return lp;
}

/// Log of the PG-augmented joint density, up to the constant PG(1,0) factor.
inline double log_posterior_unnorm(const LatentState& s,
                                   const MultiplexGraphSeries& graph,
                                   const AttributeSeries& attrs,
                                   const ModelConfig& config) {
  return log_likelihood_graph(s, graph) + log_likelihood_attrs(s, attrs) +
         log_prior(s, graph.grid(), config);
}

/// Run metadata. Wall time is report-only; it never enters the archive
/// binary so identical seeds produce byte-identical archives.
struct RunProvenance {
  std::uint64_t seed = 0;
  int sweep_count = 0;
  int num_chains = 1;
  double wall_seconds = 0.0;
};

struct MonitorSeries {
  std::string name;
  std::vector<double> values;  // one per kept draw
  double ess = 0.0;
};

/// Ordered post burn-in draws (omega excluded) plus run metadata.
struct PosteriorArchive {
  std::vector<LatentState> draws;
  std::vector<int> chain_of_draw;  // chain label per draw
  ModelConfig config;
  TimeGrid grid;
  RunProvenance provenance;
  std::vector<MonitorSeries> monitors;  // diagnostics, not serialized
};

}  // namespace djl
