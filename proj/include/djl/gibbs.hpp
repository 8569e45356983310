#pragma once

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "djl/data.hpp"
#include "djl/diagnostics.hpp"
#include "djl/errors.hpp"
#include "djl/kernel.hpp"
#include "djl/model.hpp"
#include "djl/polya_gamma.hpp"
#include "djl/rng.hpp"

namespace djl {

enum class BlockKind {
  Omega,
  Mu,
  Eta,
  Sigma2,
  Zeta,
  Xi,
  Alpha,
  SignFlips,
  BetaGrids
};

/// Fixed update order of one sweep. Omega leads so the augmentation is fresh
/// before any Gaussian block consumes it. SignFlips are exact symmetry moves
/// over the sign-unidentified factor ranks; without them the raw factor
/// coordinates dwell in one of the two symmetric modes for thousands of
/// sweeps.
struct SweepPlan {
  std::vector<BlockKind> order;
  int thin = 1;

  static SweepPlan standard(int thin = 1) {
    return SweepPlan{{BlockKind::Omega, BlockKind::Mu, BlockKind::Eta,
                      BlockKind::Sigma2, BlockKind::Zeta, BlockKind::Xi,
                      BlockKind::Alpha, BlockKind::SignFlips,
                      BlockKind::BetaGrids},
                     thin};
  }
};

/// Data-side precision (diagonal over time) and moment of one Gaussian full
/// conditional; the conditional is N(S m, S), S^-1 = diag + prior precision.
struct GaussianBlockSpec {
  Eigen::VectorXd data_precision_diag;
  Eigen::VectorXd moment;
};

/// Blocked Gibbs sampler over the PG-augmented joint posterior. One sampler
/// owns one chain's state (single-writer); the data are shared immutable.
class GibbsSampler {
 public:
  GibbsSampler(const MultiplexGraphSeries& graph, const AttributeSeries& attrs,
               const ModelConfig& config)
      : graph_(graph), attrs_(attrs), config_(config) {
    config.validate();
    if (!(graph.grid() == attrs.grid())) {
      throw GridMismatch("graph and attribute grids differ");
    }
    if (graph.num_nodes() != attrs.num_nodes()) {
      throw ShapeMismatch("graph and attribute node counts differ");
    }
    state_ = LatentState::zeros(graph.num_nodes(), graph.num_layers(),
                                attrs.num_attrs(), graph.num_times(),
                                config.rank_shared, config.rank_layer,
                                config.joint_mode, config.depth);
    state_.omega.assign(static_cast<std::size_t>(graph.observed_count()), 0.25);
  }

  const LatentState& state() const { return state_; }
  LatentState& state() { return state_; }

  /// Prior draws for every latent vector at beta = (0.05, 0.05), unit
  /// idiosyncratic variances, omega refreshed by one PG pass.
  void init(Rng& rng) {
    const KernelParams init_beta{0.05, 0.05, config_.depth};
    state_.beta_mu = state_.beta_eta = state_.beta_zeta = state_.beta_xi =
        state_.beta_alpha = state_.beta_xi_attr = init_beta;
    rebuild_prior_caches();
    const CovMatrix cov = build_cov(graph_.grid(), init_beta, config_.jitter);
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(state_.num_times);
    state_.mu = sample_mvn(zero, cov, rng);
    for (FunctionTable* tbl :
         {&state_.eta, &state_.zeta, &state_.xi, &state_.alpha}) {
      for (int u = 0; u < tbl->units(); ++u) {
        tbl->row(u) = sample_mvn(zero, cov, rng);
      }
    }
    if (state_.xi_attr) {
      for (int u = 0; u < state_.xi_attr->units(); ++u) {
        state_.xi_attr->row(u) = sample_mvn(zero, cov, rng);
      }
    }
    state_.sigma2.setOnes();
    update_omega(rng);
  }

  void sweep(Rng& rng, const SweepPlan& plan = SweepPlan::standard()) {
    for (BlockKind kind : plan.order) {
      switch (kind) {
        case BlockKind::Omega: update_omega(rng); break;
        case BlockKind::Mu: update_mu(rng); break;
        case BlockKind::Eta: update_eta(rng); break;
        case BlockKind::Sigma2: update_sigma2(rng); break;
        case BlockKind::Zeta: update_zeta(rng); break;
        case BlockKind::Xi: update_xi(rng); break;
        case BlockKind::Alpha: update_alpha(rng); break;
        case BlockKind::SignFlips: update_sign_flips(rng); break;
        case BlockKind::BetaGrids: update_beta_grids(); break;
      }
    }
  }

  /// omega <- PG(1, |psi|) at every observed dyad cell.
  void update_omega(Rng& rng) {
    graph_.for_each_observed([&](int, int j, int jp, int l, int t, std::int8_t,
                                 int slot) {
      const double psi = edge_linear_predictor(state_, j, jp, l, t);
      state_.omega[static_cast<std::size_t>(slot)] = sample_pg1(psi, rng);
    });
  }

  GaussianBlockSpec assemble_mu() const {
    GaussianBlockSpec b;
    b.data_precision_diag = Eigen::VectorXd::Zero(state_.num_times);
    b.moment = Eigen::VectorXd::Zero(state_.num_times);
    graph_.for_each_observed([&](int, int j, int jp, int l, int t,
                                 std::int8_t a, int slot) {
      const double w = state_.omega[static_cast<std::size_t>(slot)];
      const double rest =
          edge_linear_predictor(state_, j, jp, l, t) - state_.mu(t);
      b.data_precision_diag(t) += w;
      b.moment(t) += (a - 0.5) - w * rest;
    });
    return b;
  }

  void update_mu(Rng& rng) {
    const GaussianBlockSpec b = assemble_mu();
    state_.mu = draw_block(b, prior_prec_mu_, rng);
  }

  GaussianBlockSpec assemble_eta(int k) const {
    GaussianBlockSpec b;
    b.data_precision_diag = Eigen::VectorXd::Zero(state_.num_times);
    b.moment = Eigen::VectorXd::Zero(state_.num_times);
    const double inv_s2 = 1.0 / state_.sigma2(k);
    attrs_.for_each_observed([&](int j, int kk, int t, double x) {
      if (kk != k) return;
      const double s = attribute_mean(state_, j, k, t) - state_.eta(k, t);
      b.data_precision_diag(t) += inv_s2;
      b.moment(t) += (x - s) * inv_s2;
    });
    return b;
  }

  void update_eta(Rng& rng) {
    for (int k = 0; k < state_.num_attrs; ++k) {
      const GaussianBlockSpec b = assemble_eta(k);
      state_.eta.row(k) = draw_block(b, prior_prec_eta_, rng);
    }
  }

  void update_sigma2(Rng& rng) {
    for (int k = 0; k < state_.num_attrs; ++k) {
      double n = 0.0;
      double rss = 0.0;
      attrs_.for_each_observed([&](int j, int kk, int t, double x) {
        if (kk != k) return;
        const double r = x - attribute_mean(state_, j, k, t);
        n += 1.0;
        rss += r * r;
      });
      state_.sigma2(k) = rng.inverse_gamma(config_.a_sigma + 0.5 * n,
                                           config_.b_sigma + 0.5 * rss);
    }
  }

  GaussianBlockSpec assemble_zeta(int j, int r) const {
    GaussianBlockSpec b;
    b.data_precision_diag = Eigen::VectorXd::Zero(state_.num_times);
    b.moment = Eigen::VectorXd::Zero(state_.num_times);
    const int row_j = state_.zeta_row(j, r);
    graph_.for_each_observed_of_node(
        j, [&](int, int, int jp, int l, int t, std::int8_t a, int slot) {
          const double w = state_.omega[static_cast<std::size_t>(slot)];
          const double coef = state_.zeta(state_.zeta_row(jp, r), t);
          const double rest = edge_linear_predictor(state_, j, jp, l, t) -
                              state_.zeta(row_j, t) * coef;
          b.data_precision_diag(t) += w * coef * coef;
          b.moment(t) += coef * ((a - 0.5) - w * rest);
        });
    return b;
  }

  void update_zeta(Rng& rng) {
    for (int j = 0; j < state_.num_nodes; ++j) {
      for (int r = 0; r < state_.rank_shared; ++r) {
        const GaussianBlockSpec b = assemble_zeta(j, r);
        state_.zeta.row(state_.zeta_row(j, r)) =
            draw_block(b, prior_prec_zeta_, rng);
      }
    }
  }

  /// Graph-side xi block. In joint mode the attribute likelihood contributes;
  /// in marginal mode it is edge-only and the attribute terms drive the
  /// independent copy instead (assemble_xi_attr).
  GaussianBlockSpec assemble_xi(int j, int l, int r) const {
    GaussianBlockSpec b;
    b.data_precision_diag = Eigen::VectorXd::Zero(state_.num_times);
    b.moment = Eigen::VectorXd::Zero(state_.num_times);
    const int row_j = state_.xi_row(j, l, r);
    graph_.for_each_observed_of_node(
        j, [&](int, int, int jp, int ll, int t, std::int8_t a, int slot) {
          if (ll != l) return;
          const double w = state_.omega[static_cast<std::size_t>(slot)];
          const double coef = state_.xi(state_.xi_row(jp, l, r), t);
          const double rest = edge_linear_predictor(state_, j, jp, l, t) -
                              state_.xi(row_j, t) * coef;
          b.data_precision_diag(t) += w * coef * coef;
          b.moment(t) += coef * ((a - 0.5) - w * rest);
        });
    if (config_.joint_mode) {
      add_attr_terms_for_xi(j, l, r, b);
    }
    return b;
  }

  /// Attribute-side factor block in marginal mode (attribute terms only).
  GaussianBlockSpec assemble_xi_attr(int j, int l, int r) const {
    GaussianBlockSpec b;
    b.data_precision_diag = Eigen::VectorXd::Zero(state_.num_times);
    b.moment = Eigen::VectorXd::Zero(state_.num_times);
    add_attr_terms_for_xi(j, l, r, b);
    return b;
  }

  void update_xi(Rng& rng) {
    for (int j = 0; j < state_.num_nodes; ++j) {
      for (int l = 0; l < state_.num_layers; ++l) {
        for (int r = 0; r < state_.rank_layer; ++r) {
          const GaussianBlockSpec b = assemble_xi(j, l, r);
          state_.xi.row(state_.xi_row(j, l, r)) =
              draw_block(b, prior_prec_xi_, rng);
        }
      }
    }
    if (state_.xi_attr) {
      for (int j = 0; j < state_.num_nodes; ++j) {
        for (int l = 0; l < state_.num_layers; ++l) {
          for (int r = 0; r < state_.rank_layer; ++r) {
            const GaussianBlockSpec b = assemble_xi_attr(j, l, r);
            state_.xi_attr->row(state_.xi_row(j, l, r)) =
                draw_block(b, prior_prec_xi_attr_, rng);
          }
        }
      }
    }
  }

  GaussianBlockSpec assemble_alpha(int k, int l, int r) const {
    GaussianBlockSpec b;
    b.data_precision_diag = Eigen::VectorXd::Zero(state_.num_times);
    b.moment = Eigen::VectorXd::Zero(state_.num_times);
    const FunctionTable& xi = state_.attr_xi();
    const int row_a = state_.alpha_row(k, l, r);
    const double inv_s2 = 1.0 / state_.sigma2(k);
    attrs_.for_each_observed([&](int j, int kk, int t, double x) {
      if (kk != k) return;
      const double coef = xi(state_.xi_row(j, l, r), t);
      const double rest =
          attribute_mean(state_, j, k, t) - coef * state_.alpha(row_a, t);
      b.data_precision_diag(t) += coef * coef * inv_s2;
      b.moment(t) += coef * (x - rest) * inv_s2;
    });
    return b;
  }

  void update_alpha(Rng& rng) {
    for (int k = 0; k < state_.num_attrs; ++k) {
      for (int l = 0; l < state_.num_layers; ++l) {
        for (int r = 0; r < state_.rank_layer; ++r) {
          const GaussianBlockSpec b = assemble_alpha(k, l, r);
          state_.alpha.row(state_.alpha_row(k, l, r)) =
              draw_block(b, prior_prec_alpha_, rng);
        }
      }
    }
  }

  /// Flips the sign of whole rank columns with probability one half each.
  /// The edge likelihood sees factors only through products over nodes, the
  /// attribute likelihood through xi' alpha, and the priors are mean-zero,
  /// so each flip leaves the posterior exactly invariant; mixing across the
  /// symmetric sign modes becomes immediate instead of a slow barrier
  /// crossing.
  void update_sign_flips(Rng& rng) {
    for (int r = 0; r < state_.rank_shared; ++r) {
      if (!rng.bernoulli(0.5)) continue;
      for (int j = 0; j < state_.num_nodes; ++j) {
        auto row = state_.zeta.row(state_.zeta_row(j, r));
        row = -row;
      }
    }
    for (int l = 0; l < state_.num_layers; ++l) {
      for (int r = 0; r < state_.rank_layer; ++r) {
        if (rng.bernoulli(0.5)) {
          // alpha pairs with the factors driving the attribute model
          FunctionTable& coupled = state_.attr_xi();
          for (int j = 0; j < state_.num_nodes; ++j) {
            auto row = coupled.row(state_.xi_row(j, l, r));
            row = -row;
          }
          for (int k = 0; k < state_.num_attrs; ++k) {
            auto row = state_.alpha.row(state_.alpha_row(k, l, r));
            row = -row;
          }
        }
        if (state_.xi_attr && rng.bernoulli(0.5)) {
          // in marginal mode the graph-side factors flip on their own
          for (int j = 0; j < state_.num_nodes; ++j) {
            auto row = state_.xi.row(state_.xi_row(j, l, r));
            row = -row;
          }
        }
      }
    }
  }

  /// For each family independently, pick the grid candidate maximizing the
  /// summed Gaussian log prior density of the family's current vectors; ties
  /// break toward the smallest (sigma_weight_sq, sigma_bias_sq).
  void update_beta_grids() {
    ensure_grid_cache();
    state_.beta_mu = best_beta_for([&](int) { return state_.mu; }, 1);
    state_.beta_eta = best_beta_for_table(state_.eta);
    state_.beta_zeta = best_beta_for_table(state_.zeta);
    state_.beta_xi = best_beta_for_table(state_.xi);
    state_.beta_alpha = best_beta_for_table(state_.alpha);
    if (state_.xi_attr) {
      state_.beta_xi_attr = best_beta_for_table(*state_.xi_attr);
    }
    rebuild_prior_caches();
  }

  /// One draw of N(S m, S) with S^-1 = prior precision + diag(data precision).
  static Eigen::VectorXd draw_block(const GaussianBlockSpec& b,
                                    const Eigen::MatrixXd& prior_precision,
                                    Rng& rng) {
    Eigen::MatrixXd lambda = prior_precision;
    lambda.diagonal() += b.data_precision_diag;
    const auto llt = detail::chol_with_escalation(lambda, 1e-10, 1e-6);
    const Eigen::VectorXd mean = llt.solve(b.moment);
    Eigen::VectorXd z(mean.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
    return mean + llt.matrixU().solve(z);
  }

  /// Prior precision of a family currently cached by the sampler.
  const Eigen::MatrixXd& prior_precision(BlockKind kind,
                                         bool attr_copy = false) const {
    switch (kind) {
      case BlockKind::Mu: return prior_prec_mu_;
      case BlockKind::Eta: return prior_prec_eta_;
      case BlockKind::Zeta: return prior_prec_zeta_;
      case BlockKind::Xi: return attr_copy ? prior_prec_xi_attr_ : prior_prec_xi_;
      case BlockKind::Alpha: return prior_prec_alpha_;
      default: throw IndexOutOfRange("no prior precision for this block");
    }
  }

  void rebuild_prior_caches() {
    prior_prec_mu_ = family_precision(state_.beta_mu);
    prior_prec_eta_ = family_precision(state_.beta_eta);
    prior_prec_zeta_ = family_precision(state_.beta_zeta);
    prior_prec_xi_ = family_precision(state_.beta_xi);
    prior_prec_alpha_ = family_precision(state_.beta_alpha);
    if (state_.xi_attr) {
      prior_prec_xi_attr_ = family_precision(state_.beta_xi_attr);
    }
  }

 private:
  void add_attr_terms_for_xi(int j, int l, int r, GaussianBlockSpec& b) const {
    const FunctionTable& xi = state_.attr_xi();
    const int row_j = state_.xi_row(j, l, r);
    attrs_.for_each_observed([&](int jj, int k, int t, double x) {
      if (jj != j) return;
      const double inv_s2 = 1.0 / state_.sigma2(k);
      const double coef = state_.alpha(state_.alpha_row(k, l, r), t);
      const double rest =
          attribute_mean(state_, j, k, t) - xi(row_j, t) * coef;
      b.data_precision_diag(t) += coef * coef * inv_s2;
      b.moment(t) += coef * (x - rest) * inv_s2;
    });
  }

  Eigen::MatrixXd family_precision(const KernelParams& beta) const {
    const CovMatrix cov = build_cov(graph_.grid(), beta, config_.jitter);
    const auto llt = detail::chol_with_escalation(cov.values, 1e-10, 1e-6);
    Eigen::MatrixXd inv = llt.solve(
        Eigen::MatrixXd::Identity(cov.values.rows(), cov.values.cols()));
    // one Newton refinement pass; the kernel matrix is ill-conditioned on
    // dense grids and the raw solve leaves O(eps * cond) residue
    inv = inv * (2.0 * Eigen::MatrixXd::Identity(inv.rows(), inv.cols()) -
                 cov.values * inv);
    inv = 0.5 * (inv + inv.transpose());
    return inv;
  }

  struct GridCandidate {
    KernelParams beta;
    Eigen::MatrixXd precision;
    double logdet = 0.0;
  };

  void ensure_grid_cache() {
    if (!grid_cache_.empty()) return;
    grid_cache_.reserve(config_.hyper_grid.size());
    for (const auto& [bias, weight] : config_.hyper_grid) {
      GridCandidate c;
      c.beta = KernelParams{bias, weight, config_.depth};
      const CovMatrix cov = build_cov(graph_.grid(), c.beta, config_.jitter);
      const auto llt = detail::chol_with_escalation(cov.values, 1e-10, 1e-6);
      const Eigen::MatrixXd l = llt.matrixL();
      for (Eigen::Index i = 0; i < l.rows(); ++i) {
        c.logdet += 2.0 * std::log(l(i, i));
      }
      c.precision = llt.solve(
          Eigen::MatrixXd::Identity(cov.values.rows(), cov.values.cols()));
      grid_cache_.push_back(std::move(c));
    }
  }

  /// The summed quadratic form over a family is trace(Sigma^-1 S) with
  /// S = sum_v v v', so each candidate costs one T x T contraction.
  template <typename RowFn>
  KernelParams best_beta_for(const RowFn& row, int n_rows) {
    const int t = state_.num_times;
    Eigen::MatrixXd scatter = Eigen::MatrixXd::Zero(t, t);
    for (int u = 0; u < n_rows; ++u) {
      const Eigen::VectorXd v = row(u);
      scatter.noalias() += v * v.transpose();
    }
    const KernelParams* best = nullptr;
    double best_score = 0.0;
    for (const GridCandidate& c : grid_cache_) {
      const double quad = c.precision.cwiseProduct(scatter).sum();
      const double score = -0.5 * quad - 0.5 * n_rows * c.logdet;
      const bool better =
          !best || score > best_score ||
          (score == best_score &&
           std::make_pair(c.beta.sigma_weight_sq, c.beta.sigma_bias_sq) <
               std::make_pair(best->sigma_weight_sq, best->sigma_bias_sq));
      if (better) {
        best = &c.beta;
        best_score = score;
      }
    }
    return *best;
  }

  KernelParams best_beta_for_table(const FunctionTable& tbl) {
    return best_beta_for(
        [&](int u) { return Eigen::VectorXd(tbl.row(u)); }, tbl.units());
  }

  const MultiplexGraphSeries& graph_;
  const AttributeSeries& attrs_;
  ModelConfig config_;
  LatentState state_;

  Eigen::MatrixXd prior_prec_mu_, prior_prec_eta_, prior_prec_zeta_,
      prior_prec_xi_, prior_prec_alpha_, prior_prec_xi_attr_;
  std::vector<GridCandidate> grid_cache_;
};

/// Monitored scalars mirroring the convergence traceplots: mu(t_1),
/// eta_2(t_1) when m >= 2, alpha_{1,1,R}(t_1), xi_{1,1,ceil(R/2)}(t_1).
inline std::vector<std::pair<std::string, double>> monitored_scalars(
    const LatentState& s) {
  std::vector<std::pair<std::string, double>> out;
  out.emplace_back("mu[t1]", s.mu(0));
  if (s.num_attrs >= 2) out.emplace_back("eta2[t1]", s.eta(1, 0));
  out.emplace_back("alpha[1,1,R][t1]",
                   s.alpha(s.alpha_row(0, 0, s.rank_layer - 1), 0));
  out.emplace_back("xi[1,1,R/2][t1]",
                   s.xi(s.xi_row(0, 0, (s.rank_layer + 1) / 2 - 1), 0));
  return out;
}

/// Runs burn_in + keep * thin sweeps and archives keep post burn-in states
/// (omega excluded). Sampler errors are rethrown with the sweep index.
inline PosteriorArchive run_chain(const MultiplexGraphSeries& graph,
                                  const AttributeSeries& attrs,
                                  const ModelConfig& config,
                                  int chain_label = 0) {
  const auto start = std::chrono::steady_clock::now();
  GibbsSampler sampler(graph, attrs, config);
  Rng rng(config.seed);

  PosteriorArchive archive;
  archive.config = config;
  archive.grid = graph.grid();
  archive.provenance.seed = config.seed;
  archive.provenance.num_chains = 1;
  archive.draws.reserve(static_cast<std::size_t>(config.keep));

  for (const auto& [name, value] : monitored_scalars(sampler.state())) {
    (void)value;
    archive.monitors.push_back(MonitorSeries{name, {}, 0.0});
  }

  const SweepPlan plan = SweepPlan::standard(config.thin);
  const int total = config.burn_in + config.keep * config.thin;
  int sweep_idx = 0;
  try {
    sampler.init(rng);
    for (sweep_idx = 0; sweep_idx < total; ++sweep_idx) {
      sampler.sweep(rng, plan);
      const int post = sweep_idx - config.burn_in + 1;
      if (post >= 1 && post % config.thin == 0) {
        LatentState draw = sampler.state();
        draw.omega.clear();
        archive.draws.push_back(std::move(draw));
        archive.chain_of_draw.push_back(chain_label);
        auto monitored = monitored_scalars(sampler.state());
        for (std::size_t i = 0; i < monitored.size(); ++i) {
          archive.monitors[i].values.push_back(monitored[i].second);
        }
      }
    }
  } catch (const FactorizationFailure& e) {
    std::ostringstream os;
    os << e.what() << " (sweep " << sweep_idx << ")";
    throw FactorizationFailure(os.str());
  } catch (const SamplerStall& e) {
    std::ostringstream os;
    os << e.what() << " (sweep " << sweep_idx << ")";
    throw SamplerStall(os.str());
  }

  for (MonitorSeries& m : archive.monitors) {
    m.ess = effective_sample_size(m.values);
  }
  archive.provenance.sweep_count = total;
  archive.provenance.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return archive;
}

}  // namespace djl
