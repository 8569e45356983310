#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <utility>
#include <vector>

#include "djl/data.hpp"
#include "djl/errors.hpp"
#include "djl/kernel.hpp"
#include "djl/model.hpp"
#include "djl/rng.hpp"

namespace djl {

/// Posterior mean edge score for one dyad cell.
struct EdgeScore {
  double time = 0.0;
  int layer = 0, i = 0, j = 0;
  double probability = 0.0;
  double decision_threshold = 0.5;

  bool predicted_edge() const { return probability > decision_threshold; }
};

/// Point prediction and equal-tailed 95% predictive interval for one
/// attribute cell.
struct AttrPrediction {
  double time = 0.0;
  int node = 0, attr = 0;
  double point = 0.0;
  double interval_lo = 0.0;
  double interval_hi = 0.0;
};

/// Rao-Blackwellized scores average logistic(psi) over draws; the Bernoulli
/// mode averages resampled edge indicators instead (same expectation,
/// higher variance).
enum class EdgeScoreMode { RaoBlackwell, Bernoulli };

struct EdgeTarget {
  int layer = 0, i = 0, j = 0, t_idx = 0;
};

struct AttrTarget {
  int node = 0, attr = 0, t_idx = 0;
};

namespace detail {

inline double empirical_quantile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double h = p * (static_cast<double>(v.size()) - 1.0);
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double w = h - static_cast<double>(lo);
  return (1.0 - w) * v[lo] + w * v[hi];
}

}  // namespace detail

/// Scores arbitrary in-grid dyad cells against the archive.
inline std::vector<EdgeScore> score_edges(
    const PosteriorArchive& archive, const std::vector<EdgeTarget>& targets,
    double threshold = 0.5, EdgeScoreMode mode = EdgeScoreMode::RaoBlackwell,
    Rng* rng = nullptr) {
  const double q = static_cast<double>(archive.draws.size());
  std::vector<EdgeScore> out;
  out.reserve(targets.size());
  Rng fallback(archive.provenance.seed ^ 0x5ca1ab1eull);
  Rng& r = rng ? *rng : fallback;
  for (const EdgeTarget& c : targets) {
    double acc = 0.0;
    for (const LatentState& s : archive.draws) {
      const double p =
          logistic(edge_linear_predictor(s, c.i, c.j, c.layer, c.t_idx));
      acc += (mode == EdgeScoreMode::RaoBlackwell)
                 ? p
                 : (r.bernoulli(p) ? 1.0 : 0.0);
    }
    out.push_back(EdgeScore{archive.grid[c.t_idx], c.layer, c.i, c.j, acc / q,
                            threshold});
  }
  return out;
}

/// Scores every mask-false cell of the graph within the training grid.
inline std::vector<EdgeScore> score_missing_edges(
    const PosteriorArchive& archive, const MultiplexGraphSeries& graph,
    double threshold = 0.5, EdgeScoreMode mode = EdgeScoreMode::RaoBlackwell,
    Rng* rng = nullptr) {
  if (!(archive.grid == graph.grid())) {
    throw GridMismatch("archive grid does not match graph grid");
  }
  std::vector<EdgeTarget> targets;
  for (int d = 0; d < graph.num_dyads(); ++d) {
    const auto [j, jp] = graph.dyad_nodes(d);
    for (int l = 0; l < graph.num_layers(); ++l) {
      for (int t = 0; t < graph.num_times(); ++t) {
        if (!graph.is_observed_dyad(d, l, t)) {
          targets.push_back(EdgeTarget{l, j, jp, t});
        }
      }
    }
  }
  return score_edges(archive, targets, threshold, mode, rng);
}

/// Per-draw joint conditional extension of every latent function to new
/// times. Conditioning matrices are cached per distinct kernel parameters,
/// which the grid update keeps few.
class DrawExtender {
 public:
  DrawExtender(TimeGrid obs_grid, TimeGrid new_times, double jitter)
      : obs_(std::move(obs_grid)), new_(std::move(new_times)),
        jitter_(jitter) {}

  const TimeGrid& new_times() const { return new_; }

  /// Values of all latent functions of `draw` at the new times.
  LatentState extend(const LatentState& draw, Rng& rng) {
    LatentState ext = LatentState::zeros(
        draw.num_nodes, draw.num_layers, draw.num_attrs, new_.size(),
        draw.rank_shared, draw.rank_layer, !draw.xi_attr.has_value(),
        draw.beta_mu.depth);
    ext.sigma2 = draw.sigma2;
    const Cond& cmu = cond_for(draw.beta_mu);
    ext.mu = draw_one(cmu, draw.mu, rng);
    extend_table(draw.eta, ext.eta, draw.beta_eta, rng);
    extend_table(draw.zeta, ext.zeta, draw.beta_zeta, rng);
    extend_table(draw.xi, ext.xi, draw.beta_xi, rng);
    extend_table(draw.alpha, ext.alpha, draw.beta_alpha, rng);
    if (draw.xi_attr) {
      ext.xi_attr = FunctionTable(draw.xi_attr->units(), new_.size());
      extend_table(*draw.xi_attr, *ext.xi_attr, draw.beta_xi_attr, rng);
    }
    return ext;
  }

 private:
  struct Cond {
    Eigen::MatrixXd w;       // K^-1 K*, obs x new
    Eigen::MatrixXd chol_l;  // lower factor of the conditional covariance
  };

  const Cond& cond_for(const KernelParams& beta) {
    const auto key = std::make_pair(beta.sigma_bias_sq, beta.sigma_weight_sq);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    const GpConditional gc = gp_condition(
        obs_, Eigen::VectorXd::Zero(obs_.size()), new_, beta, jitter_);
    Cond c;
    {
      const int n = obs_.size();
      const int m = new_.size();
      Eigen::MatrixXd k(n, n);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j <= i; ++j) {
          const double v = kappa_recursive(obs_[i], obs_[j], beta);
          k(i, j) = v;
          k(j, i) = v;
        }
      }
      k.diagonal().array() += jitter_;
      Eigen::MatrixXd kstar(n, m);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < m; ++j) {
          kstar(i, j) = kappa_recursive(obs_[i], new_[j], beta);
        }
      }
      c.w = detail::chol_with_escalation(k, 1e-10, 1e-6).solve(kstar);
    }
    c.chol_l = detail::chol_with_escalation(gc.cov.values, 1e-10, 1e-6)
                   .matrixL();
    return cache_.emplace(key, std::move(c)).first->second;
  }

  Eigen::VectorXd draw_one(const Cond& c, const Eigen::VectorXd& obs_values,
                           Rng& rng) {
    Eigen::VectorXd z(new_.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
    return c.w.transpose() * obs_values + c.chol_l * z;
  }

  void extend_table(const FunctionTable& src, FunctionTable& dst,
                    const KernelParams& beta, Rng& rng) {
    const Cond& c = cond_for(beta);
    for (int u = 0; u < src.units(); ++u) {
      dst.row(u) = draw_one(c, src.row(u), rng);
    }
  }

  TimeGrid obs_;
  TimeGrid new_;
  double jitter_;
  std::map<std::pair<double, double>, Cond> cache_;
};

/// Scores dyad cells at out-of-sample times: per posterior draw every latent
/// function is extended by GP conditioning under that draw's kernel
/// hyperparameters, one joint conditional draw per function per draw.
inline std::vector<EdgeScore> score_future_edges(
    const PosteriorArchive& archive, const MultiplexGraphSeries& graph,
    const TimeGrid& new_times, Rng& rng, double threshold = 0.5,
    EdgeScoreMode mode = EdgeScoreMode::RaoBlackwell) {
  if (!(archive.grid == graph.grid())) {
    throw GridMismatch("archive grid does not match graph grid");
  }
  DrawExtender extender(archive.grid, new_times, archive.config.jitter);
  const int num_cells =
      graph.num_dyads() * graph.num_layers() * new_times.size();
  std::vector<double> acc(static_cast<std::size_t>(num_cells), 0.0);
  for (const LatentState& s : archive.draws) {
    const LatentState ext = extender.extend(s, rng);
    int cell = 0;
    for (int d = 0; d < graph.num_dyads(); ++d) {
      const auto [j, jp] = graph.dyad_nodes(d);
      for (int l = 0; l < graph.num_layers(); ++l) {
        for (int t = 0; t < new_times.size(); ++t) {
          const double p = logistic(edge_linear_predictor(ext, j, jp, l, t));
          acc[static_cast<std::size_t>(cell++)] +=
              (mode == EdgeScoreMode::RaoBlackwell)
                  ? p
                  : (rng.bernoulli(p) ? 1.0 : 0.0);
        }
      }
    }
  }
  const double q = static_cast<double>(archive.draws.size());
  std::vector<EdgeScore> out;
  out.reserve(acc.size());
  int cell = 0;
  for (int d = 0; d < graph.num_dyads(); ++d) {
    const auto [j, jp] = graph.dyad_nodes(d);
    for (int l = 0; l < graph.num_layers(); ++l) {
      for (int t = 0; t < new_times.size(); ++t) {
        out.push_back(EdgeScore{new_times[t], l, j, jp,
                                acc[static_cast<std::size_t>(cell++)] / q,
                                threshold});
      }
    }
  }
  return out;
}

/// Posterior predictive draws x ~ N(attribute mean, sigma_k^2) per archive
/// draw; point = sample mean, interval = empirical 2.5% / 97.5% quantiles.
inline std::vector<AttrPrediction> predict_attributes(
    const PosteriorArchive& archive, const std::vector<AttrTarget>& targets,
    Rng& rng) {
  const std::size_t q = archive.draws.size();
  std::vector<std::vector<double>> samples(targets.size());
  for (auto& v : samples) v.reserve(q);
  for (const LatentState& s : archive.draws) {
    for (std::size_t c = 0; c < targets.size(); ++c) {
      const AttrTarget& tg = targets[c];
      const double mean = attribute_mean(s, tg.node, tg.attr, tg.t_idx);
      samples[c].push_back(mean +
                           std::sqrt(s.sigma2(tg.attr)) * rng.normal());
    }
  }
  std::vector<AttrPrediction> out;
  out.reserve(targets.size());
  for (std::size_t c = 0; c < targets.size(); ++c) {
    const AttrTarget& tg = targets[c];
    AttrPrediction p;
    p.time = archive.grid[tg.t_idx];
    p.node = tg.node;
    p.attr = tg.attr;
    p.point = std::accumulate(samples[c].begin(), samples[c].end(), 0.0) /
              static_cast<double>(samples[c].size());
    p.interval_lo = detail::empirical_quantile(samples[c], 0.025);
    p.interval_hi = detail::empirical_quantile(samples[c], 0.975);
    if (p.point < p.interval_lo) p.point = p.interval_lo;
    if (p.point > p.interval_hi) p.point = p.interval_hi;
    out.push_back(p);
  }
  return out;
}

/// Same with targets at out-of-sample times (t_idx indexes new_times).
inline std::vector<AttrPrediction> predict_attributes_future(
    const PosteriorArchive& archive, const TimeGrid& new_times,
    const std::vector<AttrTarget>& targets, Rng& rng) {
  DrawExtender extender(archive.grid, new_times, archive.config.jitter);
  std::vector<std::vector<double>> samples(targets.size());
  for (auto& v : samples) v.reserve(archive.draws.size());
  for (const LatentState& s : archive.draws) {
    const LatentState ext = extender.extend(s, rng);
    for (std::size_t c = 0; c < targets.size(); ++c) {
      const AttrTarget& tg = targets[c];
      const double mean = attribute_mean(ext, tg.node, tg.attr, tg.t_idx);
      samples[c].push_back(mean +
                           std::sqrt(ext.sigma2(tg.attr)) * rng.normal());
    }
  }
  std::vector<AttrPrediction> out;
  out.reserve(targets.size());
  for (std::size_t c = 0; c < targets.size(); ++c) {
    const AttrTarget& tg = targets[c];
    AttrPrediction p;
    p.time = new_times[tg.t_idx];
    p.node = tg.node;
    p.attr = tg.attr;
    p.point = std::accumulate(samples[c].begin(), samples[c].end(), 0.0) /
              static_cast<double>(samples[c].size());
    p.interval_lo = detail::empirical_quantile(samples[c], 0.025);
    p.interval_hi = detail::empirical_quantile(samples[c], 0.975);
    if (p.point < p.interval_lo) p.point = p.interval_lo;
    if (p.point > p.interval_hi) p.point = p.interval_hi;
    out.push_back(p);
  }
  return out;
}

/// Rank-based (Mann-Whitney) AUC with midrank tie handling.
inline double auc(const std::vector<std::pair<double, int>>& scored) {
  const std::size_t n = scored.size();
  std::size_t n_pos = 0;
  for (const auto& [s, y] : scored) {
    (void)s;
    if (y != 0) ++n_pos;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw DegenerateLabels("AUC needs both classes present");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scored[a].first < scored[b].first;
  });
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n &&
           scored[order[j + 1]].first == scored[order[i]].first) {
      ++j;
    }
    const double midrank = 0.5 * (static_cast<double>(i + 1) +
                                  static_cast<double>(j + 1));
    for (std::size_t k = i; k <= j; ++k) {
      if (scored[order[k]].second != 0) rank_sum_pos += midrank;
    }
    i = j + 1;
  }
  const double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) *
                                      (static_cast<double>(n_pos) + 1.0);
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

/// Mean of squared (point - truth).
inline double mspe(const std::vector<AttrPrediction>& predictions,
                   const std::vector<double>& truth) {
  if (predictions.empty() || predictions.size() != truth.size()) {
    throw ShapeMismatch("mspe needs matching nonempty inputs");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double d = predictions[i].point - truth[i];
    s += d * d;
  }
  return s / static_cast<double>(predictions.size());
}

struct IntervalMetrics {
  double coverage = 0.0;
  double mean_length = 0.0;
};

inline IntervalMetrics interval_metrics(
    const std::vector<AttrPrediction>& predictions,
    const std::vector<double>& truth) {
  if (predictions.empty() || predictions.size() != truth.size()) {
    throw ShapeMismatch("interval metrics need matching nonempty inputs");
  }
  IntervalMetrics m;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto& p = predictions[i];
    if (truth[i] >= p.interval_lo && truth[i] <= p.interval_hi) {
      m.coverage += 1.0;
    }
    m.mean_length += p.interval_hi - p.interval_lo;
  }
  m.coverage /= static_cast<double>(predictions.size());
  m.mean_length /= static_cast<double>(predictions.size());
  return m;
}

}  // namespace djl
