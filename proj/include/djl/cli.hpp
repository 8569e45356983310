#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "djl/align.hpp"
#include "djl/errors.hpp"
#include "djl/gibbs.hpp"
#include "djl/io.hpp"
#include "djl/model.hpp"
#include "djl/predict.hpp"
#include "djl/simulate.hpp"

namespace djl::cli {

namespace fs = std::filesystem;
using nlohmann::json;

struct Paths {
  std::string edges = "edges.csv";
  std::string attributes = "attributes.csv";
  std::string ledger_edges = "ledger_edges.csv";
  std::string ledger_attributes = "ledger_attributes.csv";
  std::string nodes = "nodes.csv";
  std::string archive = "archive.bin";
  std::string diagnostics = "diagnostics.txt";
  std::string predictions_edges = "predictions_edges.csv";
  std::string predictions_attributes = "predictions_attributes.csv";
  std::string metrics = "metrics.csv";
  std::string positions = "positions.csv";
};

/// Parsed run configuration (config file plus CLI overrides).
struct RunConfig {
  std::uint64_t seed = 1;
  std::string out_dir = ".";

  // data sizes shared by the simulation schemes
  int nodes = 20, layers = 2, attrs = 2, times = 20;

  int scheme = 1;
  Scheme1Params scheme1;
  Scheme2Params scheme2;
  Scheme3Params scheme3;
  bool standardize_attributes = true;
  MaskPolicy mask;

  ModelConfig model;
  int chains = 1;

  double threshold = 0.5;
  bool bernoulli_scores = false;
  std::vector<double> future_times;

  std::vector<int> align_time_indices;  // empty = all times
  bool emit_gram = false;

  Paths paths;

  fs::path resolve(const std::string& name) const {
    fs::path p(name);
    if (p.is_absolute()) return p;
    return fs::path(out_dir) / p;
  }
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config field '" + key + "': " + e.what());
  }
}

inline KernelParams parse_kernel(const json& j, int depth) {
  KernelParams k;
  k.sigma_bias_sq = get_or(j, "sigma_bias_sq", 0.01);
  k.sigma_weight_sq = get_or(j, "sigma_weight_sq", 0.4);
  k.depth = depth;
  return k;
}

}  // namespace detail

/// Loads and validates the structured config document.
inline RunConfig load_config(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config: " + path.string());
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config parse error: " + std::string(e.what()));
  }
  if (!j.contains("schema_version")) {
    throw ConfigError("config missing schema_version");
  }
  if (j.at("schema_version").get<int>() != 1) {
    throw ConfigError("unsupported config schema_version");
  }

  RunConfig c;
  c.seed = detail::get_or<std::uint64_t>(j, "seed", 1);
  c.out_dir = detail::get_or<std::string>(j, "out_dir", ".");

  if (j.contains("data")) {
    const json& d = j.at("data");
    c.nodes = detail::get_or(d, "nodes", c.nodes);
    c.layers = detail::get_or(d, "layers", c.layers);
    c.attrs = detail::get_or(d, "attrs", c.attrs);
    c.times = detail::get_or(d, "times", c.times);
  }

  if (j.contains("simulate")) {
    const json& s = j.at("simulate");
    c.scheme = detail::get_or(s, "scheme", 1);
    if (c.scheme < 1 || c.scheme > 3) {
      throw ConfigError("simulate.scheme must be 1, 2 or 3");
    }
    const int depth = detail::get_or(s, "depth", 1);
    const int rank_shared = detail::get_or(s, "rank_shared", 4);
    const int rank_layer = detail::get_or(s, "rank_layer", 4);
    const double noise = detail::get_or(s, "attr_noise_var", 1.0);

    Scheme1Params p1 = s.contains("kernel")
                           ? Scheme1Params::with_shared_beta(
                                 detail::get_or(s.at("kernel"),
                                                "sigma_bias_sq", 0.01),
                                 detail::get_or(s.at("kernel"),
                                                "sigma_weight_sq", 0.4),
                                 depth)
                           : Scheme1Params::with_shared_beta(0.01, 0.4, depth);
    p1.rank_shared = rank_shared;
    p1.rank_layer = rank_layer;
    p1.num_nodes = c.nodes;
    p1.num_layers = c.layers;
    p1.num_attrs = c.attrs;
    p1.num_times = c.times;
    p1.attr_noise_var = noise;
    c.scheme1 = p1;

    Scheme2Params p2;
    if (s.contains("ar")) {
      const json& a = s.at("ar");
      const double rho = detail::get_or(a, "rho", 0.5);
      const double var = detail::get_or(a, "innovation_var", 4.0);
      p2.rho_mu = detail::get_or(a, "rho_mu", rho);
      p2.rho_eta = detail::get_or(a, "rho_eta", rho);
      p2.rho_zeta = detail::get_or(a, "rho_zeta", rho);
      p2.rho_xi = detail::get_or(a, "rho_xi", rho);
      p2.rho_alpha = detail::get_or(a, "rho_alpha", rho);
      p2.var_mu = detail::get_or(a, "var_mu", var);
      p2.var_eta = detail::get_or(a, "var_eta", var);
      p2.var_zeta = detail::get_or(a, "var_zeta", var);
      p2.var_xi = detail::get_or(a, "var_xi", var);
      p2.var_alpha = detail::get_or(a, "var_alpha", var);
    }
    p2.rank_shared = rank_shared;
    p2.rank_layer = rank_layer;
    p2.num_nodes = c.nodes;
    p2.num_layers = c.layers;
    p2.num_attrs = c.attrs;
    p2.num_times = c.times;
    p2.attr_noise_var = noise;
    c.scheme2 = p2;

    Scheme3Params p3;
    p3.theta1_scale = detail::get_or(s, "theta1_scale", 1.0);
    p3.theta2 = detail::get_or(s, "theta2", 0.5);
    p3.attr = p1;
    c.scheme3 = p3;

    c.standardize_attributes =
        detail::get_or(s, "standardize_attributes", true);
    if (s.contains("mask")) {
      const json& m = s.at("mask");
      c.mask.time_select_prob = detail::get_or(m, "time_select_prob", 0.1);
      c.mask.edge_drop_prob = detail::get_or(m, "edge_drop_prob", 0.25);
      c.mask.holdout_future_times =
          detail::get_or(m, "holdout_future_times", 0);
    }
    c.mask.validate();
  }

  if (j.contains("fit")) {
    const json& ft = j.at("fit");
    c.model.rank_shared = detail::get_or(ft, "rank_shared", 4);
    c.model.rank_layer = detail::get_or(ft, "rank_layer", 4);
    c.model.depth = detail::get_or(ft, "depth", 1);
    c.model.burn_in = detail::get_or(ft, "burn_in", 5000);
    c.model.keep = detail::get_or(ft, "keep", 10000);
    c.model.thin = detail::get_or(ft, "thin", 1);
    c.model.a_sigma = detail::get_or(ft, "a_sigma", 2.0);
    c.model.b_sigma = detail::get_or(ft, "b_sigma", 1.0);
    c.model.jitter = detail::get_or(ft, "jitter", 1e-8);
    c.model.joint_mode = detail::get_or(ft, "joint_mode", true);
    c.chains = detail::get_or(ft, "chains", 1);
    if (c.chains < 1) throw ConfigError("fit.chains must be >= 1");
    if (ft.contains("hyper_grid_values")) {
      const auto vals =
          ft.at("hyper_grid_values").get<std::vector<double>>();
      if (vals.empty()) throw ConfigError("hyper_grid_values empty");
      c.model.hyper_grid.clear();
      for (double a : vals) {
        for (double b : vals) c.model.hyper_grid.emplace_back(a, b);
      }
    }
    c.model.validate();
  }

  if (j.contains("predict")) {
    const json& p = j.at("predict");
    c.threshold = detail::get_or(p, "threshold", 0.5);
    c.bernoulli_scores = detail::get_or(p, "bernoulli_scores", false);
    c.future_times =
        detail::get_or(p, "future_times", std::vector<double>{});
    if (!(c.threshold > 0.0 && c.threshold < 1.0)) {
      throw ConfigError("predict.threshold must lie in (0, 1)");
    }
  }

  if (j.contains("align")) {
    const json& a = j.at("align");
    c.align_time_indices =
        detail::get_or(a, "time_indices", std::vector<int>{});
    c.emit_gram = detail::get_or(a, "gram", false);
  }

  if (j.contains("paths")) {
    const json& p = j.at("paths");
    c.paths.edges = detail::get_or(p, "edges", c.paths.edges);
    c.paths.attributes = detail::get_or(p, "attributes", c.paths.attributes);
    c.paths.ledger_edges =
        detail::get_or(p, "ledger_edges", c.paths.ledger_edges);
    c.paths.ledger_attributes =
        detail::get_or(p, "ledger_attributes", c.paths.ledger_attributes);
    c.paths.nodes = detail::get_or(p, "nodes", c.paths.nodes);
    c.paths.archive = detail::get_or(p, "archive", c.paths.archive);
    c.paths.diagnostics =
        detail::get_or(p, "diagnostics", c.paths.diagnostics);
    c.paths.predictions_edges =
        detail::get_or(p, "predictions_edges", c.paths.predictions_edges);
    c.paths.predictions_attributes = detail::get_or(
        p, "predictions_attributes", c.paths.predictions_attributes);
    c.paths.metrics = detail::get_or(p, "metrics", c.paths.metrics);
    c.paths.positions = detail::get_or(p, "positions", c.paths.positions);
  }
  return c;
}

/// Standardizes each attribute to zero mean and unit variance using cells in
/// the training window only; the same affine map is applied everywhere.
inline void standardize_attrs(AttributeSeries& attrs, int train_times) {
  for (int k = 0; k < attrs.num_attrs(); ++k) {
    double sum = 0.0, sq = 0.0;
    int n = 0;
    for (int j = 0; j < attrs.num_nodes(); ++j) {
      for (int t = 0; t < train_times; ++t) {
        const double v = attrs.value(j, k, t);
        sum += v;
        sq += v * v;
        ++n;
      }
    }
    const double mean = sum / n;
    const double var = (sq - n * mean * mean) / std::max(1, n - 1);
    const double sd = var > 0.0 ? std::sqrt(var) : 1.0;
    for (int j = 0; j < attrs.num_nodes(); ++j) {
      for (int t = 0; t < attrs.num_times(); ++t) {
        attrs.set_value(j, k, t, (attrs.value(j, k, t) - mean) / sd);
      }
    }
  }
}

/// simulate: generate a dataset under the configured scheme, apply the
/// masking protocol, and write dataset + truth ledger files.
inline void cmd_simulate(const RunConfig& c, std::ostream& log = std::cout) {
  if (!fs::exists(c.out_dir)) {
    throw IoError("output directory does not exist: " + c.out_dir);
  }
  const int t_total = c.times + c.mask.holdout_future_times;
  const TimeGrid grid = TimeGrid::regular(t_total);
  Rng rng(c.seed);

  SimulatedData data = [&] {
    switch (c.scheme) {
      case 1: return simulate_scheme1(c.scheme1, grid, rng);
      case 2: return simulate_scheme2(c.scheme2, grid, rng);
      default: return simulate_scheme3(c.scheme3, grid, rng);
    }
  }();
  if (c.standardize_attributes) standardize_attrs(data.attrs, c.times);

  const EdgeMaskResult em = apply_mask(data.graph, c.mask, rng);
  const AttrMaskResult am = apply_attr_mask(data.attrs, c.mask, rng);

  const auto ids = io::default_node_ids(c.nodes);
  io::write_edges_csv(c.resolve(c.paths.edges), em.masked, ids);
  io::write_attrs_csv(c.resolve(c.paths.attributes), am.masked, ids);
  io::write_edge_ledger(c.resolve(c.paths.ledger_edges), em.ledger, ids);
  io::write_attr_ledger(c.resolve(c.paths.ledger_attributes), am.ledger, ids);
  io::write_nodes_csv(c.resolve(c.paths.nodes), ids);

  int hidden_missing = 0, hidden_future = 0;
  for (const auto& h : em.ledger) {
    (h.scenario == Scenario::Missing ? hidden_missing : hidden_future) += 1;
  }
  log << "simulated scheme " << c.scheme << ": J=" << c.nodes
      << " L=" << c.layers << " m=" << c.attrs << " T=" << c.times
      << " (+" << c.mask.holdout_future_times << " future)"
      << " dyad-cells=" << em.masked.num_dyads() * c.layers * c.times
      << " hidden-edges=" << hidden_missing
      << " future-edges=" << hidden_future
      << " hidden-attrs=" << am.ledger.size() << "\n";
}

/// fit: run the Gibbs sampler (possibly several chains with derived seeds),
/// write the binary archive, the node mapping and a diagnostics report.
inline void cmd_fit(const RunConfig& c, std::ostream& log = std::cout) {
  const io::Dataset ds = io::read_dataset(c.resolve(c.paths.edges),
                                          c.resolve(c.paths.attributes));
  ModelConfig mc = c.model;
  PosteriorArchive merged;
  for (int chain = 0; chain < c.chains; ++chain) {
    mc.seed = c.chains == 1 ? c.seed
                            : detail::splitmix64(c.seed + static_cast<std::uint64_t>(chain));
    PosteriorArchive a = run_chain(ds.graph, ds.attrs, mc, chain);
    if (chain == 0) {
      merged = std::move(a);
      merged.provenance.seed = c.seed;
      merged.provenance.num_chains = c.chains;
    } else {
      for (std::size_t q = 0; q < a.draws.size(); ++q) {
        merged.draws.push_back(std::move(a.draws[q]));
        merged.chain_of_draw.push_back(chain);
      }
      for (std::size_t i = 0; i < a.monitors.size(); ++i) {
        MonitorSeries m = a.monitors[i];
        m.name += " (chain " + std::to_string(chain) + ")";
        merged.monitors.push_back(std::move(m));
      }
      merged.provenance.sweep_count += a.provenance.sweep_count;
      merged.provenance.wall_seconds += a.provenance.wall_seconds;
    }
  }

  io::write_archive(c.resolve(c.paths.archive), merged);
  io::write_nodes_csv(c.resolve(c.paths.nodes), ds.node_ids);

  auto diag = io::open_output(c.resolve(c.paths.diagnostics));
  const double per_sweep =
      merged.provenance.wall_seconds /
      std::max(1, merged.provenance.sweep_count);
  diag << "chains: " << c.chains << "\n"
       << "sweeps total: " << merged.provenance.sweep_count << "\n"
       << "draws kept: " << merged.draws.size() << "\n"
       << "wall seconds: " << merged.provenance.wall_seconds << "\n"
       << "seconds per sweep: " << per_sweep << "\n";
  for (const MonitorSeries& m : merged.monitors) {
    diag << "ess " << m.name << ": " << m.ess << " ("
         << m.ess / std::max<std::size_t>(1, m.values.size()) << " per draw)\n";
  }
  log << "fit: " << merged.draws.size() << " draws, "
      << merged.provenance.wall_seconds << " s (" << per_sweep
      << " s/sweep)\n";
}

namespace detail {

inline void collect_edge_targets(const MultiplexGraphSeries& g, bool observed,
                                 std::vector<EdgeTarget>& out) {
  for (int d = 0; d < g.num_dyads(); ++d) {
    const auto [i, j] = g.dyad_nodes(d);
    for (int l = 0; l < g.num_layers(); ++l) {
      for (int t = 0; t < g.num_times(); ++t) {
        if (g.is_observed_dyad(d, l, t) == observed) {
          out.push_back(EdgeTarget{l, i, j, t});
        }
      }
    }
  }
}

}  // namespace detail

/// predict: emit edge scores (in-sample, missing and out-of-sample) and
/// attribute predictions with 95% intervals.
inline void cmd_predict(const RunConfig& c, std::ostream& log = std::cout) {
  const io::Dataset ds = io::read_dataset(c.resolve(c.paths.edges),
                                          c.resolve(c.paths.attributes));
  const PosteriorArchive archive = io::read_archive(c.resolve(c.paths.archive));
  if (!(archive.grid == ds.graph.grid())) {
    throw GridMismatch("archive grid does not match dataset grid");
  }
  Rng rng(c.seed);
  const EdgeScoreMode mode = c.bernoulli_scores ? EdgeScoreMode::Bernoulli
                                                : EdgeScoreMode::RaoBlackwell;

  std::vector<EdgeTarget> in_targets, missing_targets;
  detail::collect_edge_targets(ds.graph, true, in_targets);
  detail::collect_edge_targets(ds.graph, false, missing_targets);
  const auto in_scores =
      score_edges(archive, in_targets, c.threshold, mode, &rng);
  const auto missing_scores =
      score_edges(archive, missing_targets, c.threshold, mode, &rng);
  std::vector<EdgeScore> future_scores;
  std::optional<TimeGrid> future_grid;
  if (!c.future_times.empty()) {
    future_grid = TimeGrid(c.future_times);
    future_scores = score_future_edges(archive, ds.graph, *future_grid, rng,
                                       c.threshold, mode);
  }

  {
    auto f = io::open_output(c.resolve(c.paths.predictions_edges));
    f << "scenario,time,layer,i,j,probability,predicted\n";
    auto emit = [&](const char* scenario, const std::vector<EdgeScore>& v) {
      for (const EdgeScore& s : v) {
        f << scenario << ',' << io::format_double(s.time) << ',' << s.layer
          << ',' << ds.node_ids[static_cast<std::size_t>(s.i)] << ','
          << ds.node_ids[static_cast<std::size_t>(s.j)] << ','
          << io::format_double(s.probability) << ','
          << (s.predicted_edge() ? 1 : 0) << '\n';
      }
    };
    emit("in", in_scores);
    emit("missing", missing_scores);
    emit("future", future_scores);
  }

  std::vector<AttrTarget> attr_in, attr_missing;
  for (int j = 0; j < ds.attrs.num_nodes(); ++j) {
    for (int k = 0; k < ds.attrs.num_attrs(); ++k) {
      for (int t = 0; t < ds.attrs.num_times(); ++t) {
        (ds.attrs.is_observed(j, k, t) ? attr_in : attr_missing)
            .push_back(AttrTarget{j, k, t});
      }
    }
  }
  const auto pred_in = predict_attributes(archive, attr_in, rng);
  const auto pred_missing = predict_attributes(archive, attr_missing, rng);
  std::vector<AttrPrediction> pred_future;
  if (future_grid) {
    std::vector<AttrTarget> attr_future;
    for (int j = 0; j < ds.attrs.num_nodes(); ++j) {
      for (int k = 0; k < ds.attrs.num_attrs(); ++k) {
        for (int t = 0; t < future_grid->size(); ++t) {
          attr_future.push_back(AttrTarget{j, k, t});
        }
      }
    }
    pred_future =
        predict_attributes_future(archive, *future_grid, attr_future, rng);
  }

  {
    auto f = io::open_output(c.resolve(c.paths.predictions_attributes));
    f << "scenario,time,node,attr,point,lo,hi\n";
    auto emit = [&](const char* scenario,
                    const std::vector<AttrPrediction>& v) {
      for (const AttrPrediction& p : v) {
        f << scenario << ',' << io::format_double(p.time) << ','
          << ds.node_ids[static_cast<std::size_t>(p.node)] << ',' << p.attr
          << ',' << io::format_double(p.point) << ','
          << io::format_double(p.interval_lo) << ','
          << io::format_double(p.interval_hi) << '\n';
      }
    };
    emit("in", pred_in);
    emit("missing", pred_missing);
    emit("future", pred_future);
  }
  log << "predict: " << in_scores.size() + missing_scores.size() +
                            future_scores.size()
      << " edge scores, "
      << pred_in.size() + pred_missing.size() + pred_future.size()
      << " attribute predictions\n";
}

struct MetricsRow {
  std::string scenario;
  std::string target;  // "edges" or "attributes"
  std::string metric;
  double value;
};

/// evaluate: join predictions with dataset/ledger truth and report AUC,
/// MSPE, coverage and interval length per scenario.
inline std::vector<MetricsRow> cmd_evaluate(const RunConfig& c,
                                            std::ostream& log = std::cout) {
  const io::Dataset ds = io::read_dataset(c.resolve(c.paths.edges),
                                          c.resolve(c.paths.attributes));
  const auto edge_ledger =
      io::read_edge_ledger(c.resolve(c.paths.ledger_edges), ds.node_ids);
  const auto attr_ledger = io::read_attr_ledger(
      c.resolve(c.paths.ledger_attributes), ds.node_ids);
  std::map<std::string, int> node_index;
  for (std::size_t j = 0; j < ds.node_ids.size(); ++j) {
    node_index[ds.node_ids[j]] = static_cast<int>(j);
  }

  // truth maps keyed by (scenario, time, layer/attr, i, j/node)
  std::map<std::tuple<std::string, double, int, int, int>, double> edge_truth;
  ds.graph.for_each_observed([&](int, int j, int jp, int l, int t,
                                 std::int8_t a, int) {
    edge_truth[{"in", ds.graph.grid()[t], l, j, jp}] = a;
  });
  for (const HiddenEdge& h : edge_ledger) {
    const char* sc = io::scenario_name(h.scenario);
    const auto [lo, hi] = std::minmax(h.i, h.j);
    edge_truth[{sc, h.time, h.layer, lo, hi}] = h.value;
  }
  std::map<std::tuple<std::string, double, int, int>, double> attr_truth;
  ds.attrs.for_each_observed([&](int j, int k, int t, double x) {
    attr_truth[{"in", ds.attrs.grid()[t], k, j}] = x;
  });
  for (const HiddenAttr& h : attr_ledger) {
    attr_truth[{io::scenario_name(h.scenario), h.time, h.attr, h.node}] =
        h.value;
  }

  std::map<std::string, std::vector<std::pair<double, int>>> edge_scored;
  std::vector<std::string> missing_keys;
  {
    auto f = io::open_input(c.resolve(c.paths.predictions_edges));
    io::detail::expect_header(f, "scenario,time,layer,i,j,probability,predicted",
                              c.resolve(c.paths.predictions_edges));
    std::string line;
    int line_no = 1;
    while (std::getline(f, line)) {
      ++line_no;
      if (line.empty()) continue;
      const auto fields = io::split_csv(line);
      if (fields.size() != 7) {
        throw SchemaError("line " + std::to_string(line_no) +
                          ": expected 7 fields");
      }
      const std::string scenario(fields[0]);
      const double time = io::parse_double(fields[1], line_no);
      const int layer = static_cast<int>(io::parse_int(fields[2], line_no));
      const auto it_i = node_index.find(std::string(fields[3]));
      const auto it_j = node_index.find(std::string(fields[4]));
      if (it_i == node_index.end() || it_j == node_index.end()) {
        throw SchemaError("line " + std::to_string(line_no) +
                          ": unknown node id");
      }
      const double prob = io::parse_double(fields[5], line_no);
      const auto [lo, hi] = std::minmax(it_i->second, it_j->second);
      const auto key = std::make_tuple(scenario, time, layer, lo, hi);
      const auto truth = edge_truth.find(key);
      if (truth == edge_truth.end()) {
        missing_keys.push_back("edge " + scenario + " t=" +
                               io::format_double(time) + " l=" +
                               std::to_string(layer) + " (" +
                               std::string(fields[3]) + "," +
                               std::string(fields[4]) + ")");
        continue;
      }
      edge_scored[scenario].emplace_back(prob,
                                         truth->second > 0.5 ? 1 : 0);
    }
  }

  std::map<std::string, std::vector<AttrPrediction>> attr_preds;
  std::map<std::string, std::vector<double>> attr_truths;
  {
    auto f = io::open_input(c.resolve(c.paths.predictions_attributes));
    io::detail::expect_header(f, "scenario,time,node,attr,point,lo,hi",
                              c.resolve(c.paths.predictions_attributes));
    std::string line;
    int line_no = 1;
    while (std::getline(f, line)) {
      ++line_no;
      if (line.empty()) continue;
      const auto fields = io::split_csv(line);
      if (fields.size() != 7) {
        throw SchemaError("line " + std::to_string(line_no) +
                          ": expected 7 fields");
      }
      const std::string scenario(fields[0]);
      const double time = io::parse_double(fields[1], line_no);
      const auto it = node_index.find(std::string(fields[2]));
      if (it == node_index.end()) {
        throw SchemaError("line " + std::to_string(line_no) +
                          ": unknown node id");
      }
      const int attr = static_cast<int>(io::parse_int(fields[3], line_no));
      AttrPrediction p;
      p.time = time;
      p.node = it->second;
      p.attr = attr;
      p.point = io::parse_double(fields[4], line_no);
      p.interval_lo = io::parse_double(fields[5], line_no);
      p.interval_hi = io::parse_double(fields[6], line_no);
      const auto truth = attr_truth.find({scenario, time, attr, it->second});
      if (truth == attr_truth.end()) {
        missing_keys.push_back("attr " + scenario + " t=" +
                               io::format_double(time) + " node=" +
                               std::string(fields[2]) + " k=" +
                               std::to_string(attr));
        continue;
      }
      attr_preds[scenario].push_back(p);
      attr_truths[scenario].push_back(truth->second);
    }
  }
  if (!missing_keys.empty()) {
    std::string msg = "predictions without matching truth:";
    for (std::size_t i = 0; i < std::min<std::size_t>(missing_keys.size(), 20);
         ++i) {
      msg += "\n  " + missing_keys[i];
    }
    if (missing_keys.size() > 20) {
      msg += "\n  ... (" + std::to_string(missing_keys.size() - 20) + " more)";
    }
    throw KeyMismatch(msg);
  }

  std::vector<MetricsRow> rows;
  for (const char* scenario : {"in", "missing", "future"}) {
    const auto es = edge_scored.find(scenario);
    if (es != edge_scored.end() && !es->second.empty()) {
      rows.push_back(MetricsRow{scenario, "edges", "auc", auc(es->second)});
      rows.push_back(MetricsRow{scenario, "edges", "count",
                                static_cast<double>(es->second.size())});
    }
    const auto ap = attr_preds.find(scenario);
    if (ap != attr_preds.end() && !ap->second.empty()) {
      const auto& truth = attr_truths[scenario];
      rows.push_back(
          MetricsRow{scenario, "attributes", "mspe", mspe(ap->second, truth)});
      if (std::string(scenario) != "in") {
        // coverage is reported over ledger cells only
        const IntervalMetrics im = interval_metrics(ap->second, truth);
        rows.push_back(MetricsRow{scenario, "attributes", "coverage95",
                                  im.coverage});
        rows.push_back(MetricsRow{scenario, "attributes", "interval_length",
                                  im.mean_length});
      }
      rows.push_back(MetricsRow{scenario, "attributes", "count",
                                static_cast<double>(ap->second.size())});
    }
  }

  auto f = io::open_output(c.resolve(c.paths.metrics));
  f << "scenario,target,metric,value\n";
  for (const MetricsRow& r : rows) {
    f << r.scenario << ',' << r.target << ',' << r.metric << ','
      << io::format_double(r.value) << '\n';
  }
  for (const MetricsRow& r : rows) {
    log << r.scenario << " " << r.target << " " << r.metric << " = "
        << r.value << "\n";
  }
  return rows;
}

/// align: Procrustes-align posterior draws, project posterior-mean latent
/// positions to two dimensions, and emit plot data.
inline void cmd_align(const RunConfig& c, std::ostream& log = std::cout) {
  const PosteriorArchive archive = io::read_archive(c.resolve(c.paths.archive));
  std::vector<std::string> ids;
  {
    auto f = io::open_input(c.resolve(c.paths.nodes));
    io::detail::expect_header(f, "index,id", c.resolve(c.paths.nodes));
    std::string line;
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      const auto fields = io::split_csv(line);
      if (fields.size() == 2) ids.emplace_back(fields[1]);
    }
  }
  if (static_cast<int>(ids.size()) != archive.draws.front().num_nodes) {
    throw KeyMismatch("node mapping size does not match archive");
  }

  std::vector<int> t_indices = c.align_time_indices;
  if (t_indices.empty()) {
    for (int t = 0; t < archive.grid.size(); ++t) t_indices.push_back(t);
  }

  auto f = io::open_output(c.resolve(c.paths.positions));
  f << "time,node,v1,v2,rank_deficient\n";
  for (int t : t_indices) {
    const LatentPositionFrame mean = posterior_mean_positions(archive, t);
    const PcaProjection proj = pca_project(mean);
    for (int j = 0; j < mean.z.rows(); ++j) {
      f << io::format_double(archive.grid[t]) << ','
        << ids[static_cast<std::size_t>(j)] << ','
        << io::format_double(proj.coords(j, 0)) << ','
        << io::format_double(proj.coords(j, 1)) << ','
        << (proj.rank_deficient ? 1 : 0) << '\n';
    }
    if (c.emit_gram) {
      const fs::path gram_path =
          c.resolve("gram_t" + std::to_string(t) + ".csv");
      auto g = io::open_output(gram_path);
      const Eigen::MatrixXd gram = mean.z * mean.z.transpose();
      for (Eigen::Index r = 0; r < gram.rows(); ++r) {
        for (Eigen::Index col = 0; col < gram.cols(); ++col) {
          if (col) g << ',';
          g << io::format_double(gram(r, col));
        }
        g << '\n';
      }
    }
  }
  log << "align: wrote positions for " << t_indices.size() << " time(s)\n";
}

/// Maps typed errors to the documented process exit codes.
inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const FactorizationFailure*>(&e)) return 4;
  if (dynamic_cast<const SamplerStall*>(&e)) return 4;
  if (dynamic_cast<const Error*>(&e)) return 3;
  return 1;
}

}  // namespace djl::cli
