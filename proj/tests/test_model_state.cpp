#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "djl/data.hpp"
#include "djl/model.hpp"
#include "djl/rng.hpp"

using namespace djl;

namespace {

LatentState random_state(int J, int L, int m, int T, int Rz, int R, Rng& rng,
                         bool joint = true) {
  LatentState s = LatentState::zeros(J, L, m, T, Rz, R, joint, 1);
  for (int t = 0; t < T; ++t) s.mu(t) = rng.normal();
  for (FunctionTable* tbl : {&s.eta, &s.zeta, &s.xi, &s.alpha}) {
    for (double& v : tbl->raw()) v = rng.normal();
  }
  if (s.xi_attr) {
    for (double& v : s.xi_attr->raw()) v = rng.normal();
  }
  for (int k = 0; k < m; ++k) s.sigma2(k) = 0.5 + rng.uniform();
  return s;
}

// naive triple-loop evaluation, independent of the library accessors
double naive_edge_predictor(const LatentState& s, int j, int jp, int l, int t) {
  double v = s.mu(t);
  for (int r = 0; r < s.rank_shared; ++r) {
    v += s.zeta(j * s.rank_shared + r, t) * s.zeta(jp * s.rank_shared + r, t);
  }
  for (int r = 0; r < s.rank_layer; ++r) {
    v += s.xi((j * s.num_layers + l) * s.rank_layer + r, t) *
         s.xi((jp * s.num_layers + l) * s.rank_layer + r, t);
  }
  return v;
}

double naive_attr_mean(const LatentState& s, int j, int k, int t) {
  const FunctionTable& x = s.xi_attr ? *s.xi_attr : s.xi;
  double v = s.eta(k, t);
  for (int l = 0; l < s.num_layers; ++l) {
    for (int r = 0; r < s.rank_layer; ++r) {
      v += x((j * s.num_layers + l) * s.rank_layer + r, t) *
           s.alpha((k * s.num_layers + l) * s.rank_layer + r, t);
    }
  }
  return v;
}

MultiplexGraphSeries random_graph(int J, int L, int T, Rng& rng,
                                  double obs_frac = 0.8) {
  MultiplexGraphSeries g(J, L, TimeGrid::regular(T));
  for (int d = 0; d < g.num_dyads(); ++d) {
    for (int l = 0; l < L; ++l) {
      for (int t = 0; t < T; ++t) {
        if (rng.uniform() < obs_frac) {
          g.set_edge_dyad(d, l, t, rng.bernoulli(0.5) ? 1 : 0);
        }
      }
    }
  }
  return g;
}

AttributeSeries random_attrs(int J, int m, int T, Rng& rng,
                             double obs_frac = 0.9) {
  AttributeSeries a(J, m, TimeGrid::regular(T));
  for (int j = 0; j < J; ++j) {
    for (int k = 0; k < m; ++k) {
      for (int t = 0; t < T; ++t) {
        if (rng.uniform() < obs_frac) a.set_value(j, k, t, rng.normal());
      }
    }
  }
  return a;
}

}  // namespace

TEST_CASE("edge accessor mirrors the unordered dyad") {
  Rng rng(1);
  MultiplexGraphSeries g = random_graph(6, 2, 3, rng);
  for (int j = 0; j < 6; ++j) {
    for (int jp = 0; jp < 6; ++jp) {
      if (j == jp) continue;
      CHECK(g.edge(j, jp, 1, 2) == g.edge(jp, j, 1, 2));
      CHECK(g.is_observed(j, jp, 0, 0) == g.is_observed(jp, j, 0, 0));
    }
  }
  CHECK_THROWS_AS(g.edge(2, 2, 0, 0), IndexOutOfRange);
  CHECK_THROWS_AS(g.edge(0, 6, 0, 0), IndexOutOfRange);
}

TEST_CASE("dyad index round-trips") {
  Rng rng(2);
  MultiplexGraphSeries g(9, 1, TimeGrid::regular(2));
  int expected = 0;
  for (int j = 0; j < 9; ++j) {
    for (int jp = j + 1; jp < 9; ++jp) {
      CHECK(g.dyad_index(j, jp) == expected);
      const auto [a, b] = g.dyad_nodes(expected);
      CHECK(a == j);
      CHECK(b == jp);
      ++expected;
    }
  }
}

TEST_CASE("observed visitor touches exactly the mask-true cells") {
  Rng rng(3);
  MultiplexGraphSeries g = random_graph(7, 2, 4, rng, 0.6);
  int count = 0;
  g.for_each_observed([&](int d, int j, int jp, int l, int t, std::int8_t v,
                          int slot) {
    CHECK(g.is_observed(j, jp, l, t));
    CHECK(g.edge(j, jp, l, t) == v);
    CHECK(g.observed_slot(d, l, t) == slot);
    ++count;
  });
  CHECK(count == g.observed_count());

  // per-node visitor covers each observed cell of j's dyads exactly once
  for (int j = 0; j < 7; ++j) {
    int node_count = 0;
    g.for_each_observed_of_node(
        j, [&](int, int jj, int jp, int, int, std::int8_t, int) {
          CHECK(jj == j);
          CHECK(jp != j);
          ++node_count;
        });
    int expected = 0;
    g.for_each_observed([&](int, int a, int b, int, int, std::int8_t, int) {
      if (a == j || b == j) ++expected;
    });
    CHECK(node_count == expected);
  }
}

TEST_CASE("edge predictor examples") {
  Rng rng(4);
  LatentState s = LatentState::zeros(4, 2, 2, 3, 2, 2, true, 1);
  SECTION("zero state gives probability one half") {
    CHECK(edge_linear_predictor(s, 0, 1, 0, 0) == 0.0);
    CHECK(logistic(edge_linear_predictor(s, 0, 1, 0, 0)) == 0.5);
  }
  SECTION("unit inner product") {
    s.zeta(s.zeta_row(0, 0), 1) = 1.0;
    s.zeta(s.zeta_row(1, 0), 1) = 1.0;
    CHECK(edge_linear_predictor(s, 0, 1, 0, 1) == 1.0);
  }
  SECTION("random state matches naive evaluation") {
    LatentState t = random_state(5, 2, 3, 4, 3, 2, rng);
    for (int j = 0; j < 5; ++j) {
      for (int jp = 0; jp < 5; ++jp) {
        if (j == jp) continue;
        for (int l = 0; l < 2; ++l) {
          CHECK(std::abs(edge_linear_predictor(t, j, jp, l, 2) -
                         naive_edge_predictor(t, j, jp, l, 2)) < 1e-12);
          CHECK(edge_linear_predictor(t, j, jp, l, 2) ==
                edge_linear_predictor(t, jp, j, l, 2));
        }
      }
    }
  }
}

TEST_CASE("attribute mean examples") {
  Rng rng(5);
  SECTION("intercept only") {
    LatentState s = LatentState::zeros(3, 2, 2, 2, 2, 2, true, 1);
    s.eta(1, 0) = 2.5;
    CHECK(attribute_mean(s, 0, 1, 0) == 2.5);
  }
  SECTION("unit inner product, single layer") {
    LatentState s = LatentState::zeros(3, 1, 1, 1, 1, 2, true, 1);
    s.xi(s.xi_row(0, 0, 0), 0) = 1.0;
    s.alpha(s.alpha_row(0, 0, 0), 0) = 1.0;
    CHECK(attribute_mean(s, 0, 0, 0) == 1.0);
  }
  SECTION("random state matches naive evaluation in both modes") {
    for (bool joint : {true, false}) {
      LatentState s = random_state(4, 2, 3, 3, 2, 2, rng, joint);
      for (int j = 0; j < 4; ++j) {
        for (int k = 0; k < 3; ++k) {
          CHECK(std::abs(attribute_mean(s, j, k, 1) -
                         naive_attr_mean(s, j, k, 1)) < 1e-12);
        }
      }
    }
  }
}

TEST_CASE("graph log likelihood is additive over duplicated layers") {
  Rng rng(6);
  const int J = 5, T = 3;
  MultiplexGraphSeries one = random_graph(J, 1, T, rng, 0.7);
  MultiplexGraphSeries two(J, 2, one.grid());
  one.for_each_observed([&](int d, int, int, int, int t, std::int8_t v, int) {
    two.set_edge_dyad(d, 0, t, v);
    two.set_edge_dyad(d, 1, t, v);
  });
  LatentState s1 = random_state(J, 1, 2, T, 2, 2, rng);
  LatentState s2 = LatentState::zeros(J, 2, 2, T, 2, 2, true, 1);
  s2.mu = s1.mu;
  s2.zeta = s1.zeta;
  // copy the single layer's xi into both layers
  for (int j = 0; j < J; ++j) {
    for (int r = 0; r < 2; ++r) {
      for (int t = 0; t < T; ++t) {
        const double v = s1.xi(s1.xi_row(j, 0, r), t);
        s2.xi(s2.xi_row(j, 0, r), t) = v;
        s2.xi(s2.xi_row(j, 1, r), t) = v;
      }
    }
  }
  s1.omega.assign(static_cast<std::size_t>(one.observed_count()), 0.0);
  s2.omega.assign(static_cast<std::size_t>(two.observed_count()), 0.0);
  one.for_each_observed([&](int d, int j, int jp, int, int t, std::int8_t,
                            int slot) {
    const double w = 0.1 + rng.uniform();
    s1.omega[static_cast<std::size_t>(slot)] = w;
    s2.omega[static_cast<std::size_t>(two.observed_slot(d, 0, t))] = w;
    s2.omega[static_cast<std::size_t>(two.observed_slot(d, 1, t))] = w;
  });
  CHECK(log_likelihood_graph(s2, two) ==
        Catch::Approx(2.0 * log_likelihood_graph(s1, one)).epsilon(1e-12));
}

TEST_CASE("zero state kills the edge likelihood") {
  Rng rng(7);
  MultiplexGraphSeries g = random_graph(4, 2, 3, rng, 0.8);
  AttributeSeries a = random_attrs(4, 2, 3, rng);
  LatentState s = LatentState::zeros(4, 2, 2, 3, 2, 2, true, 1);
  s.omega.assign(static_cast<std::size_t>(g.observed_count()), 0.4);
  CHECK(log_likelihood_graph(s, g) == 0.0);
}

TEST_CASE("attribute likelihood restricts to the mask") {
  Rng rng(8);
  AttributeSeries a = random_attrs(4, 2, 3, rng, 1.0);
  LatentState s = random_state(4, 2, 2, 3, 2, 2, rng);
  const double full = log_likelihood_attrs(s, a);
  const double x = a.value(1, 0, 2);
  AttributeSeries b = a;
  b.hide(1, 0, 2);
  const double mean = attribute_mean(s, 1, 0, 2);
  const double cell = -0.5 * std::log(2.0 * M_PI * s.sigma2(0)) -
                      0.5 * (x - mean) * (x - mean) / s.sigma2(0);
  CHECK(log_likelihood_attrs(s, b) ==
        Catch::Approx(full - cell).epsilon(1e-12));
}

TEST_CASE("perturbing one mu coordinate changes the log posterior by the "
          "expected quadratic") {
  Rng rng(9);
  const int J = 4, L = 2, m = 2, T = 3;
  MultiplexGraphSeries g = random_graph(J, L, T, rng, 0.8);
  AttributeSeries a = random_attrs(J, m, T, rng);
  LatentState s = random_state(J, L, m, T, 2, 2, rng);
  s.omega.clear();
  s.omega.resize(static_cast<std::size_t>(g.observed_count()));
  for (double& w : s.omega) w = 0.2 + rng.uniform();
  ModelConfig cfg;
  cfg.rank_shared = 2;
  cfg.rank_layer = 2;
  cfg.depth = 1;
  cfg.jitter = 1e-8;

  const int t0 = 1;
  const double delta = 0.37;
  const double base = log_posterior_unnorm(s, g, a, cfg);

  // analytic expansion: likelihood part sum over cells at t0 of
  // (a-0.5)*delta - omega*(psi*delta + delta^2/2); prior part from the
  // Gaussian quadratic form
  double lik_term = 0.0;
  g.for_each_observed([&](int, int j, int jp, int l, int t, std::int8_t av,
                          int slot) {
    if (t != t0) return;
    const double psi = edge_linear_predictor(s, j, jp, l, t);
    const double w = s.omega[static_cast<std::size_t>(slot)];
    lik_term += (av - 0.5) * delta - w * (psi * delta + 0.5 * delta * delta);
  });
  const CovMatrix cov = build_cov(g.grid(), s.beta_mu, cfg.jitter);
  const Eigen::MatrixXd prec = cov.values.inverse();
  Eigen::VectorXd e = Eigen::VectorXd::Zero(T);
  e(t0) = delta;
  const double prior_term =
      -e.dot(prec * s.mu) - 0.5 * e.dot(prec * e);

  LatentState s2 = s;
  s2.mu(t0) += delta;
  const double perturbed = log_posterior_unnorm(s2, g, a, cfg);
  CHECK(perturbed - base ==
        Catch::Approx(lik_term + prior_term).epsilon(1e-8));
}
