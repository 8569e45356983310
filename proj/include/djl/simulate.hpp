#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "djl/data.hpp"
#include "djl/kernel.hpp"
#include "djl/model.hpp"
#include "djl/rng.hpp"

namespace djl {

/// Ground-truth generator settings for the NN-GP scheme. All latent
/// functions are drawn i.i.d. from zero-mean GPs under the per-family
/// kernels; attribute noise defaults to unit variance.
struct Scheme1Params {
  KernelParams beta_mu, beta_eta, beta_zeta, beta_xi, beta_alpha;
  int rank_shared = 4;  // R*_zeta
  int rank_layer = 4;   // R*
  int num_nodes = 20;   // J
  int num_layers = 2;   // L
  int num_attrs = 2;    // m
  int num_times = 20;   // T (training window; generation covers the grid)
  double attr_noise_var = 1.0;
  double jitter = 1e-10;

  static Scheme1Params with_shared_beta(double sigma_bias_sq,
                                        double sigma_weight_sq, int depth) {
    Scheme1Params p;
    const KernelParams b{sigma_bias_sq, sigma_weight_sq, depth};
    p.beta_mu = p.beta_eta = p.beta_zeta = p.beta_xi = p.beta_alpha = b;
    return p;
  }
};

/// Stationary AR(1) generator settings.
struct Scheme2Params {
  double rho_mu = 0.5, rho_eta = 0.5, rho_zeta = 0.5, rho_xi = 0.5,
         rho_alpha = 0.5;
  double var_mu = 4.0, var_eta = 4.0, var_zeta = 4.0, var_xi = 4.0,
         var_alpha = 4.0;
  int rank_shared = 4;
  int rank_layer = 4;
  int num_nodes = 20;
  int num_layers = 2;
  int num_attrs = 2;
  int num_times = 20;
  double attr_noise_var = 1.0;

  void validate() const {
    for (double rho : {rho_mu, rho_eta, rho_zeta, rho_xi, rho_alpha}) {
      if (!(std::abs(rho) < 1.0)) {
        throw ConfigError("AR(1) autocorrelations must satisfy |rho| < 1");
      }
    }
    for (double v : {var_mu, var_eta, var_zeta, var_xi, var_alpha}) {
      if (!(v > 0.0)) throw ConfigError("innovation variances must be > 0");
    }
  }
};

/// Misspecified generator: attributes from the NN-GP scheme, edges from a
/// dyadically independent exponential random graph with statistics
/// S1 = sum_{j,j'} a x_j'x_j'' (ordered double sum) and S2 = sum_{j,j'} a,
/// coefficients theta1(t) = theta1_scale * t / T and theta2.
struct Scheme3Params {
  double theta1_scale = 1.0;
  double theta2 = 0.5;
  Scheme1Params attr;  // attribute generator
};

struct SimulatedData {
  MultiplexGraphSeries graph;  // fully observed
  AttributeSeries attrs;       // fully observed
  LatentState truth;           // generating latent functions
};

namespace detail {

inline void draw_table_gp(FunctionTable& tbl, const CovMatrix& cov, Rng& rng) {
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(cov.values.rows());
  for (int u = 0; u < tbl.units(); ++u) {
    tbl.row(u) = sample_mvn(zero, cov, rng);
  }
}

inline void draw_edges_from_state(const LatentState& s,
                                  MultiplexGraphSeries& graph, Rng& rng) {
  for (int d = 0; d < graph.num_dyads(); ++d) {
    const auto [j, jp] = graph.dyad_nodes(d);
    for (int l = 0; l < graph.num_layers(); ++l) {
      for (int t = 0; t < graph.num_times(); ++t) {
        const double p = logistic(edge_linear_predictor(s, j, jp, l, t));
        graph.set_edge_dyad(d, l, t, rng.bernoulli(p) ? 1 : 0);
      }
    }
  }
}

inline void draw_attrs_from_state(const LatentState& s, AttributeSeries& attrs,
                                  Rng& rng) {
  for (int j = 0; j < attrs.num_nodes(); ++j) {
    for (int k = 0; k < attrs.num_attrs(); ++k) {
      const double sd = std::sqrt(s.sigma2(k));
      for (int t = 0; t < attrs.num_times(); ++t) {
        attrs.set_value(j, k, t,
                        attribute_mean(s, j, k, t) + sd * rng.normal());
      }
    }
  }
}

}  // namespace detail

/// Scheme 1: every latent function i.i.d. from its zero-mean NN-GP over the
/// grid; binary edges Bernoulli(logistic(psi)); Gaussian attributes.
inline SimulatedData simulate_scheme1(const Scheme1Params& p,
                                      const TimeGrid& grid, Rng& rng) {
  const int t_all = grid.size();
  LatentState s = LatentState::zeros(p.num_nodes, p.num_layers, p.num_attrs,
                                     t_all, p.rank_shared, p.rank_layer, true,
                                     p.beta_mu.depth);
  s.beta_mu = p.beta_mu;
  s.beta_eta = p.beta_eta;
  s.beta_zeta = p.beta_zeta;
  s.beta_xi = p.beta_xi;
  s.beta_alpha = p.beta_alpha;
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(t_all);
  s.mu = sample_mvn(zero, build_cov(grid, p.beta_mu, p.jitter), rng);
  detail::draw_table_gp(s.eta, build_cov(grid, p.beta_eta, p.jitter), rng);
  detail::draw_table_gp(s.zeta, build_cov(grid, p.beta_zeta, p.jitter), rng);
  detail::draw_table_gp(s.xi, build_cov(grid, p.beta_xi, p.jitter), rng);
  detail::draw_table_gp(s.alpha, build_cov(grid, p.beta_alpha, p.jitter), rng);
  s.sigma2.setConstant(p.attr_noise_var);

  SimulatedData out{MultiplexGraphSeries(p.num_nodes, p.num_layers, grid),
                    AttributeSeries(p.num_nodes, p.num_attrs, grid),
                    std::move(s)};
  detail::draw_edges_from_state(out.truth, out.graph, rng);
  detail::draw_attrs_from_state(out.truth, out.attrs, rng);
  return out;
}

/// Scheme 2: latent paths from the stationary AR(1) recursion with
/// stationary initialization; edges and attributes as in Scheme 1.
inline SimulatedData simulate_scheme2(const Scheme2Params& p,
                                      const TimeGrid& grid, Rng& rng) {
  p.validate();
  const int t_all = grid.size();
  LatentState s = LatentState::zeros(p.num_nodes, p.num_layers, p.num_attrs,
                                     t_all, p.rank_shared, p.rank_layer, true,
                                     0);
  auto draw_path = [&](Eigen::Ref<Eigen::VectorXd> path, double rho,
                       double var) {
    const double sd = std::sqrt(var);
    path(0) = std::sqrt(var / (1.0 - rho * rho)) * rng.normal();
    for (int t = 1; t < t_all; ++t) {
      path(t) = rho * path(t - 1) + sd * rng.normal();
    }
  };
  draw_path(s.mu, p.rho_mu, p.var_mu);
  auto draw_table = [&](FunctionTable& tbl, double rho, double var) {
    Eigen::VectorXd path(t_all);
    for (int u = 0; u < tbl.units(); ++u) {
      draw_path(path, rho, var);
      tbl.row(u) = path;
    }
  };
  draw_table(s.eta, p.rho_eta, p.var_eta);
  draw_table(s.zeta, p.rho_zeta, p.var_zeta);
  draw_table(s.xi, p.rho_xi, p.var_xi);
  draw_table(s.alpha, p.rho_alpha, p.var_alpha);
  s.sigma2.setConstant(p.attr_noise_var);

  SimulatedData out{MultiplexGraphSeries(p.num_nodes, p.num_layers, grid),
                    AttributeSeries(p.num_nodes, p.num_attrs, grid),
                    std::move(s)};
  detail::draw_edges_from_state(out.truth, out.graph, rng);
  detail::draw_attrs_from_state(out.truth, out.attrs, rng);
  return out;
}

/// Dyad success probability of the Scheme 3 graph model. The ordered double
/// sums count each dyad twice, so the change statistic of dyad (j, j') is
/// 2 theta1 sum_k x_j x_j' + 2 theta2 and dyads are independent.
inline double scheme3_dyad_logit(const Scheme3Params& p,
                                 const AttributeSeries& attrs, int j, int jp,
                                 double time_value) {
  double s1 = 0.0;
  // time index of this value in the grid
  const auto& times = attrs.grid().times;
  const int t = static_cast<int>(
      std::lower_bound(times.begin(), times.end(), time_value) -
      times.begin());
  for (int k = 0; k < attrs.num_attrs(); ++k) {
    s1 += attrs.value(j, k, t) * attrs.value(jp, k, t);
  }
  const double theta1 =
      p.theta1_scale * time_value / static_cast<double>(p.attr.num_times);
  return 2.0 * theta1 * s1 + 2.0 * p.theta2;
}

/// Scheme 3: attributes from Scheme 1; each dyad drawn independently with
/// the exact exponential-family probability (no graph MCMC needed).
inline SimulatedData simulate_scheme3(const Scheme3Params& p,
                                      const TimeGrid& grid, Rng& rng) {
  SimulatedData out = simulate_scheme1(p.attr, grid, rng);
  for (int d = 0; d < out.graph.num_dyads(); ++d) {
    const auto [j, jp] = out.graph.dyad_nodes(d);
    for (int l = 0; l < out.graph.num_layers(); ++l) {
      for (int t = 0; t < grid.size(); ++t) {
        const double logit = scheme3_dyad_logit(p, out.attrs, j, jp, grid[t]);
        out.graph.set_edge_dyad(d, l, t, rng.bernoulli(logistic(logit)) ? 1 : 0);
      }
    }
  }
  return out;
}

/// Masking protocol settings; time points are selected per layer, dyads are
/// dropped independently at selected times, and the last
/// `holdout_future_times` grid points are removed wholesale.
struct MaskPolicy {
  double time_select_prob = 0.1;
  double edge_drop_prob = 0.25;
  int holdout_future_times = 0;

  void validate() const {
    for (double pr : {time_select_prob, edge_drop_prob}) {
      if (!(pr >= 0.0 && pr <= 1.0)) {
        throw ConfigError("mask probabilities must lie in [0, 1]");
      }
    }
    if (holdout_future_times < 0) {
      throw ConfigError("holdout_future_times must be >= 0");
    }
  }
};

enum class Scenario { In, Missing, Future };

struct HiddenEdge {
  double time;
  int layer, i, j;
  std::int8_t value;
  Scenario scenario;
};

struct HiddenAttr {
  double time;
  int node, attr;
  double value;
  Scenario scenario;
};

struct EdgeMaskResult {
  MultiplexGraphSeries masked;
  std::vector<HiddenEdge> ledger;
};

struct AttrMaskResult {
  AttributeSeries masked;
  std::vector<HiddenAttr> ledger;
};

/// Applies the masking protocol to a fully observed graph. The ledger
/// records every hidden cell with its true value and scenario.
inline EdgeMaskResult apply_mask(const MultiplexGraphSeries& graph,
                                 const MaskPolicy& policy, Rng& rng) {
  policy.validate();
  const int t_all = graph.num_times();
  const int t_train = t_all - policy.holdout_future_times;
  if (t_train < 1) throw ConfigError("holdout leaves no training times");

  EdgeMaskResult out;
  out.masked = MultiplexGraphSeries(
      graph.num_nodes(), graph.num_layers(),
      TimeGrid(std::vector<double>(graph.grid().times.begin(),
                                   graph.grid().times.begin() + t_train)));
  for (int d = 0; d < graph.num_dyads(); ++d) {
    for (int l = 0; l < graph.num_layers(); ++l) {
      for (int t = 0; t < t_train; ++t) {
        out.masked.set_edge_dyad(d, l, t, graph.edge_dyad(d, l, t));
      }
    }
  }
  for (int l = 0; l < graph.num_layers(); ++l) {
    for (int t = 0; t < t_train; ++t) {
      if (!rng.bernoulli(policy.time_select_prob)) continue;
      for (int d = 0; d < graph.num_dyads(); ++d) {
        if (!rng.bernoulli(policy.edge_drop_prob)) continue;
        const auto [j, jp] = graph.dyad_nodes(d);
        out.ledger.push_back(HiddenEdge{graph.grid()[t], l, j, jp,
                                        graph.edge_dyad(d, l, t),
                                        Scenario::Missing});
        out.masked.hide_dyad(d, l, t);
      }
    }
  }
  for (int t = t_train; t < t_all; ++t) {
    for (int l = 0; l < graph.num_layers(); ++l) {
      for (int d = 0; d < graph.num_dyads(); ++d) {
        const auto [j, jp] = graph.dyad_nodes(d);
        out.ledger.push_back(HiddenEdge{graph.grid()[t], l, j, jp,
                                        graph.edge_dyad(d, l, t),
                                        Scenario::Future});
      }
    }
  }
  return out;
}

/// Same protocol mirrored onto attribute cells (time points selected per
/// attribute, node cells dropped independently).
inline AttrMaskResult apply_attr_mask(const AttributeSeries& attrs,
                                      const MaskPolicy& policy, Rng& rng) {
  policy.validate();
  const int t_all = attrs.num_times();
  const int t_train = t_all - policy.holdout_future_times;
  if (t_train < 1) throw ConfigError("holdout leaves no training times");

  AttrMaskResult out;
  out.masked = AttributeSeries(
      attrs.num_nodes(), attrs.num_attrs(),
      TimeGrid(std::vector<double>(attrs.grid().times.begin(),
                                   attrs.grid().times.begin() + t_train)));
  for (int j = 0; j < attrs.num_nodes(); ++j) {
    for (int k = 0; k < attrs.num_attrs(); ++k) {
      for (int t = 0; t < t_train; ++t) {
        out.masked.set_value(j, k, t, attrs.value(j, k, t));
      }
    }
  }
  for (int k = 0; k < attrs.num_attrs(); ++k) {
    for (int t = 0; t < t_train; ++t) {
      if (!rng.bernoulli(policy.time_select_prob)) continue;
      for (int j = 0; j < attrs.num_nodes(); ++j) {
        if (!rng.bernoulli(policy.edge_drop_prob)) continue;
        out.ledger.push_back(HiddenAttr{attrs.grid()[t], j, k,
                                        attrs.value(j, k, t),
                                        Scenario::Missing});
        out.masked.hide(j, k, t);
      }
    }
  }
  for (int t = t_train; t < t_all; ++t) {
    for (int j = 0; j < attrs.num_nodes(); ++j) {
      for (int k = 0; k < attrs.num_attrs(); ++k) {
        out.ledger.push_back(HiddenAttr{attrs.grid()[t], j, k,
                                        attrs.value(j, k, t),
                                        Scenario::Future});
      }
    }
  }
  return out;
}

/// Rebuilds the fully observed graph from a masked graph and its ledger
/// (the exact inverse of apply_mask).
inline MultiplexGraphSeries unmask(const MultiplexGraphSeries& masked,
                                   const std::vector<HiddenEdge>& ledger) {
  std::vector<double> times = masked.grid().times;
  for (const HiddenEdge& h : ledger) {
    if (h.scenario == Scenario::Future &&
        std::find(times.begin(), times.end(), h.time) == times.end()) {
      times.push_back(h.time);
    }
  }
  std::sort(times.begin(), times.end());
  const TimeGrid grid{times};
  MultiplexGraphSeries full(masked.num_nodes(), masked.num_layers(), grid);
  for (int d = 0; d < masked.num_dyads(); ++d) {
    for (int l = 0; l < masked.num_layers(); ++l) {
      for (int t = 0; t < masked.num_times(); ++t) {
        if (masked.is_observed_dyad(d, l, t)) {
          const int tt = static_cast<int>(
              std::lower_bound(times.begin(), times.end(),
                               masked.grid()[t]) -
              times.begin());
          full.set_edge_dyad(d, l, tt, masked.edge_dyad(d, l, t));
        }
      }
    }
  }
  for (const HiddenEdge& h : ledger) {
    const int tt = static_cast<int>(
        std::lower_bound(times.begin(), times.end(), h.time) - times.begin());
    full.set_edge(h.i, h.j, h.layer, tt, h.value);
  }
  return full;
}

}  // namespace djl
