#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "djl/gibbs.hpp"
#include "djl/predict.hpp"
#include "djl/simulate.hpp"

using namespace djl;

namespace {

/// Archive whose draws are i.i.d. prior-style random states.
PosteriorArchive synthetic_archive(int J, int L, int m, int T, int R, int Q,
                                   Rng& rng, double scale = 1.0) {
  PosteriorArchive a;
  a.grid = TimeGrid::regular(T);
  a.config.rank_shared = R;
  a.config.rank_layer = R;
  a.config.depth = 1;
  a.config.keep = Q;
  for (int q = 0; q < Q; ++q) {
    LatentState s = LatentState::zeros(J, L, m, T, R, R, true, 1);
    for (int t = 0; t < T; ++t) s.mu(t) = scale * rng.normal();
    for (FunctionTable* tbl : {&s.eta, &s.zeta, &s.xi, &s.alpha}) {
      for (double& v : tbl->raw()) v = scale * rng.normal();
    }
    for (int k = 0; k < m; ++k) s.sigma2(k) = 0.5 + rng.uniform();
    a.draws.push_back(std::move(s));
    a.chain_of_draw.push_back(0);
  }
  return a;
}

}  // namespace

TEST_CASE("zero-psi archive scores one half everywhere") {
  Rng rng(1);
  PosteriorArchive a = synthetic_archive(4, 1, 1, 3, 2, 5, rng, 0.0);
  MultiplexGraphSeries g(4, 1, a.grid);
  g.set_edge(0, 1, 0, 0, 1);  // everything else unobserved
  const auto scores = score_missing_edges(a, g);
  REQUIRE(scores.size() == 6 * 3 - 1);
  for (const EdgeScore& s : scores) CHECK(s.probability == 0.5);
}

TEST_CASE("single-draw score is the logistic of the predictor") {
  Rng rng(2);
  PosteriorArchive a = synthetic_archive(3, 2, 1, 2, 2, 1, rng);
  const std::vector<EdgeTarget> targets{{1, 0, 2, 1}};
  const auto scores = score_edges(a, targets);
  const double psi = edge_linear_predictor(a.draws[0], 0, 2, 1, 1);
  CHECK(scores[0].probability == Catch::Approx(logistic(psi)).epsilon(1e-15));
}

TEST_CASE("edge scores are symmetric in the dyad") {
  Rng rng(3);
  PosteriorArchive a = synthetic_archive(4, 2, 1, 3, 2, 20, rng);
  const auto s_ij = score_edges(a, {{0, 1, 3, 2}});
  const auto s_ji = score_edges(a, {{0, 3, 1, 2}});
  CHECK(s_ij[0].probability == s_ji[0].probability);
}

TEST_CASE("Bernoulli and Rao-Blackwellized scores agree within Monte Carlo "
          "tolerance") {
  Rng rng(4);
  PosteriorArchive a = synthetic_archive(4, 1, 1, 2, 2, 10000, rng, 0.3);
  const std::vector<EdgeTarget> targets{{0, 0, 1, 0}, {0, 2, 3, 1}};
  const auto rb = score_edges(a, targets, 0.5, EdgeScoreMode::RaoBlackwell);
  Rng rng_b(5);
  const auto bern =
      score_edges(a, targets, 0.5, EdgeScoreMode::Bernoulli, &rng_b);
  for (std::size_t i = 0; i < targets.size(); ++i) {
    CHECK(std::abs(rb[i].probability - bern[i].probability) < 0.02);
  }
}

TEST_CASE("adding a constant to each draw's predictor raises the score") {
  Rng rng(6);
  PosteriorArchive a = synthetic_archive(3, 1, 1, 2, 2, 50, rng);
  const std::vector<EdgeTarget> targets{{0, 0, 1, 0}};
  const double before = score_edges(a, targets)[0].probability;
  for (LatentState& s : a.draws) s.mu(0) += 0.8;
  const double after = score_edges(a, targets)[0].probability;
  CHECK(after > before);
}

TEST_CASE("future scores at observed times match in-grid scores") {
  Rng rng(7);
  // smooth latent draws so GP interpolation is accurate
  Scheme1Params p = Scheme1Params::with_shared_beta(0.05, 0.05, 1);
  p.num_nodes = 5;
  p.num_layers = 1;
  p.num_attrs = 1;
  p.num_times = 8;
  p.rank_shared = 2;
  p.rank_layer = 2;
  PosteriorArchive a;
  a.grid = TimeGrid::regular(8);
  a.config.rank_shared = 2;
  a.config.rank_layer = 2;
  a.config.depth = 1;
  a.config.jitter = 1e-10;
  const int Q = 2000;
  for (int q = 0; q < Q; ++q) {
    const SimulatedData d = simulate_scheme1(p, a.grid, rng);
    a.draws.push_back(d.truth);
    a.chain_of_draw.push_back(0);
  }
  MultiplexGraphSeries g(5, 1, a.grid);
  g.set_edge(0, 1, 0, 0, 1);
  const TimeGrid subset({3.0, 6.0});
  Rng rng2(8);
  const auto future = score_future_edges(a, g, subset, rng2);
  std::vector<EdgeTarget> targets;
  for (int d = 0; d < g.num_dyads(); ++d) {
    const auto [i, j] = g.dyad_nodes(d);
    targets.push_back(EdgeTarget{0, i, j, 2});  // t = 3
    targets.push_back(EdgeTarget{0, i, j, 5});  // t = 6
  }
  const auto in_grid = score_edges(a, targets);
  REQUIRE(future.size() == in_grid.size());
  for (std::size_t i = 0; i < future.size(); ++i) {
    // rows are ordered (dyad, layer, time) in both
    CHECK(std::abs(future[i].probability - in_grid[i].probability) < 0.02);
  }
}

TEST_CASE("all-zero archive scores one half at any future time") {
  Rng rng(9);
  // out-of-sample extension draws each function's conditional jointly, so
  // scores carry Monte Carlo noise around the symmetric limit of one half
  PosteriorArchive a = synthetic_archive(4, 1, 1, 4, 2, 2000, rng, 0.0);
  a.config.jitter = 1e-8;
  MultiplexGraphSeries g(4, 1, a.grid);
  g.set_edge(0, 1, 0, 0, 1);
  Rng rng2(10);
  const auto scores =
      score_future_edges(a, g, TimeGrid({8.0, 12.0}), rng2);
  for (const EdgeScore& s : scores) {
    CHECK(s.probability == Catch::Approx(0.5).margin(0.02));
  }
}

TEST_CASE("degenerate archive gives zero-width intervals at the mean") {
  Rng rng(11);
  PosteriorArchive a = synthetic_archive(3, 1, 1, 2, 2, 1, rng);
  a.draws[0].sigma2(0) = 1e-12;
  for (int q = 1; q < 50; ++q) {
    a.draws.push_back(a.draws[0]);
    a.chain_of_draw.push_back(0);
  }
  Rng rng2(12);
  const auto preds = predict_attributes(a, {{1, 0, 1}}, rng2);
  const double mean = attribute_mean(a.draws[0], 1, 0, 1);
  CHECK(preds[0].interval_hi - preds[0].interval_lo < 1e-4);
  CHECK(preds[0].point == Catch::Approx(mean).margin(1e-4));
  CHECK(preds[0].interval_lo <= preds[0].point);
  CHECK(preds[0].point <= preds[0].interval_hi);
}

TEST_CASE("i.i.d. standard normal predictive samples give the nominal "
          "interval") {
  Rng rng(13);
  // zero state with sigma^2 = 1: predictive samples are N(0, 1)
  PosteriorArchive a = synthetic_archive(3, 1, 1, 2, 2, 10000, rng, 0.0);
  for (LatentState& s : a.draws) s.sigma2(0) = 1.0;
  Rng rng2(14);
  const auto preds = predict_attributes(a, {{0, 0, 0}}, rng2);
  CHECK(std::abs(preds[0].interval_lo + 1.96) < 0.1);
  CHECK(std::abs(preds[0].interval_hi - 1.96) < 0.1);
}

TEST_CASE("AUC hand-enumerated examples") {
  CHECK(auc({{0.9, 1}, {0.8, 0}, {0.3, 0}}) == 1.0);
  CHECK(auc({{0.9, 0}, {0.8, 1}, {0.3, 0}}) == 0.5);
  CHECK(auc({{0.1, 1}, {0.9, 0}}) == 0.0);
  // midrank ties: all scores equal gives 0.5
  CHECK(auc({{0.5, 1}, {0.5, 0}, {0.5, 1}, {0.5, 0}}) == 0.5);
  CHECK_THROWS_AS(auc({{0.5, 1}, {0.7, 1}}), DegenerateLabels);
}

TEST_CASE("AUC of random scores is one half") {
  Rng rng(15);
  std::vector<std::pair<double, int>> scored;
  for (int i = 0; i < 10000; ++i) {
    scored.emplace_back(rng.uniform(), rng.bernoulli(0.4) ? 1 : 0);
  }
  CHECK(std::abs(auc(scored) - 0.5) < 0.02);
}

TEST_CASE("AUC is invariant under strictly increasing transforms") {
  Rng rng(16);
  std::vector<std::pair<double, int>> raw, squashed;
  for (int i = 0; i < 500; ++i) {
    const double psi = rng.normal() * 2.0;
    const int y = rng.bernoulli(logistic(psi)) ? 1 : 0;
    raw.emplace_back(psi, y);
    squashed.emplace_back(logistic(psi), y);
  }
  CHECK(auc(raw) == Catch::Approx(auc(squashed)).epsilon(1e-12));
}

TEST_CASE("MSPE examples") {
  std::vector<AttrPrediction> p(1);
  p[0].point = 2.0;
  CHECK(mspe(p, {0.0}) == 4.0);
  p[0].point = 1.5;
  CHECK(mspe(p, {1.5}) == 0.0);
  CHECK_THROWS_AS(mspe({}, {}), ShapeMismatch);
}

TEST_CASE("interval metrics") {
  std::vector<AttrPrediction> p(2);
  p[0].interval_lo = -1e9;
  p[0].interval_hi = 1e9;
  p[1].interval_lo = 3.0;
  p[1].interval_hi = 3.0;
  p[1].point = 3.0;
  const IntervalMetrics m = interval_metrics(p, {0.0, 3.0});
  CHECK(m.coverage == 1.0);
  CHECK(m.mean_length == Catch::Approx(1e9).epsilon(1e-9));

  Rng rng(17);
  std::vector<AttrPrediction> fixed(10000);
  std::vector<double> truth(10000);
  for (int i = 0; i < 10000; ++i) {
    fixed[static_cast<std::size_t>(i)].interval_lo = -1.959963985;
    fixed[static_cast<std::size_t>(i)].interval_hi = 1.959963985;
    truth[static_cast<std::size_t>(i)] = rng.normal();
  }
  const IntervalMetrics nominal = interval_metrics(fixed, truth);
  CHECK(std::abs(nominal.coverage - 0.95) < 0.01);
}

TEST_CASE("threshold decisions mostly agree between the two score modes") {
  // small fitted archive on NN-GP data
  Scheme1Params p = Scheme1Params::with_shared_beta(0.01, 0.4, 1);
  p.num_nodes = 8;
  p.num_layers = 1;
  p.num_attrs = 1;
  p.num_times = 8;
  p.rank_shared = 2;
  p.rank_layer = 2;
  Rng rng(18);
  const SimulatedData d = simulate_scheme1(p, TimeGrid::regular(8), rng);
  MaskPolicy policy{0.5, 0.5, 0};
  EdgeMaskResult masked = apply_mask(d.graph, policy, rng);
  ModelConfig cfg;
  cfg.rank_shared = 2;
  cfg.rank_layer = 2;
  cfg.burn_in = 200;
  cfg.keep = 500;
  cfg.seed = 4;
  AttributeSeries attrs(8, 1, masked.masked.grid());
  for (int j = 0; j < 8; ++j) {
    for (int t = 0; t < 8; ++t) {
      attrs.set_value(j, 0, t, d.attrs.value(j, 0, t));
    }
  }
  const PosteriorArchive arch = run_chain(masked.masked, attrs, cfg);
  const auto rb = score_missing_edges(arch, masked.masked, 0.5);
  Rng rng2(19);
  const auto bern = score_missing_edges(arch, masked.masked, 0.5,
                                        EdgeScoreMode::Bernoulli, &rng2);
  REQUIRE(rb.size() == bern.size());
  REQUIRE(!rb.empty());
  int agree = 0;
  for (std::size_t i = 0; i < rb.size(); ++i) {
    agree += rb[i].predicted_edge() == bern[i].predicted_edge();
  }
  CHECK(static_cast<double>(agree) / rb.size() >= 0.95);
}
