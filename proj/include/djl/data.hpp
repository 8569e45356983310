#pragma once

#include <cstdint>
#include <vector>

#include "djl/errors.hpp"
#include "djl/kernel.hpp"

namespace djl {

/// Sentinel stored for unobserved cells (distinct from 0/1 edge values).
inline constexpr std::int8_t kUnknownEdge = -1;

/// Binary adjacency tensor over (node, node, layer, time) for an undirected
/// multiplex graph with no self relationships. Storage covers dyads j < j'
/// only; the accessors mirror (j', j). An observation mask distinguishes
/// observed from unobserved dyad cells, and unobserved cells carry the
/// kUnknownEdge sentinel.
class MultiplexGraphSeries {
 public:
  MultiplexGraphSeries() = default;

  MultiplexGraphSeries(int num_nodes, int num_layers, TimeGrid grid)
      : num_nodes_(num_nodes),
        num_layers_(num_layers),
        grid_(std::move(grid)),
        num_dyads_(num_nodes * (num_nodes - 1) / 2),
        edges_(static_cast<std::size_t>(num_dyads_) * num_layers_ *
                   grid_.size(),
               kUnknownEdge),
        observed_(edges_.size(), 0) {
    if (num_nodes < 2) throw ShapeMismatch("graph needs at least 2 nodes");
    if (num_layers < 1) throw ShapeMismatch("graph needs at least 1 layer");
  }

  int num_nodes() const { return num_nodes_; }
  int num_layers() const { return num_layers_; }
  int num_times() const { return grid_.size(); }
  int num_dyads() const { return num_dyads_; }
  const TimeGrid& grid() const { return grid_; }

  /// Dense index of the unordered dyad {j, j'}, j != j'.
  int dyad_index(int j, int jp) const {
    check_node(j);
    check_node(jp);
    if (j == jp) throw IndexOutOfRange("self dyads are not representable");
    if (j > jp) std::swap(j, jp);
    // row-block layout over j < j'
    return j * num_nodes_ - j * (j + 1) / 2 + (jp - j - 1);
  }

  /// Inverse of dyad_index.
  std::pair<int, int> dyad_nodes(int d) const {
    int j = 0;
    int row = num_nodes_ - 1;
    while (d >= row) {
      d -= row;
      --row;
      ++j;
    }
    return {j, j + 1 + d};
  }

  bool is_observed(int j, int jp, int l, int t) const {
    return observed_[flat(dyad_index(j, jp), l, t)] != 0;
  }
  bool is_observed_dyad(int d, int l, int t) const {
    return observed_[flat(d, l, t)] != 0;
  }

  /// 0/1 for observed cells, kUnknownEdge for unobserved ones.
  std::int8_t edge(int j, int jp, int l, int t) const {
    return edges_[flat(dyad_index(j, jp), l, t)];
  }
  std::int8_t edge_dyad(int d, int l, int t) const {
    return edges_[flat(d, l, t)];
  }

  void set_edge(int j, int jp, int l, int t, std::int8_t value) {
    set_edge_dyad(dyad_index(j, jp), l, t, value);
  }
  void set_edge_dyad(int d, int l, int t, std::int8_t value) {
    if (value != 0 && value != 1) throw ShapeMismatch("edge must be 0 or 1");
    edges_[flat(d, l, t)] = value;
    observed_[flat(d, l, t)] = 1;
    obs_index_.clear();
  }

  void hide(int j, int jp, int l, int t) { hide_dyad(dyad_index(j, jp), l, t); }
  void hide_dyad(int d, int l, int t) {
    edges_[flat(d, l, t)] = kUnknownEdge;
    observed_[flat(d, l, t)] = 0;
    obs_index_.clear();
  }

  /// Number of observed dyad-layer-time cells.
  int observed_count() const {
    build_obs_index();
    return obs_count_;
  }

  /// Dense slot of an observed cell in [0, observed_count()), or -1.
  int observed_slot(int d, int l, int t) const {
    build_obs_index();
    return obs_index_[flat(d, l, t)];
  }

  /// Visits exactly the mask-true cells, in (dyad, layer, time) order.
  /// fn(dyad, j, jp, layer, t, value, slot).
  template <typename Fn>
  void for_each_observed(Fn&& fn) const {
    build_obs_index();
    for (int d = 0; d < num_dyads_; ++d) {
      const auto [j, jp] = dyad_nodes(d);
      for (int l = 0; l < num_layers_; ++l) {
        for (int t = 0; t < grid_.size(); ++t) {
          const std::size_t f = flat(d, l, t);
          if (observed_[f]) fn(d, j, jp, l, t, edges_[f], obs_index_[f]);
        }
      }
    }
  }

  /// Visits the mask-true cells of dyads containing node j, same signature;
  /// jp is always the partner node.
  template <typename Fn>
  void for_each_observed_of_node(int j, Fn&& fn) const {
    build_obs_index();
    for (int jp = 0; jp < num_nodes_; ++jp) {
      if (jp == j) continue;
      const int d = dyad_index(j, jp);
      for (int l = 0; l < num_layers_; ++l) {
        for (int t = 0; t < grid_.size(); ++t) {
          const std::size_t f = flat(d, l, t);
          if (observed_[f]) fn(d, j, jp, l, t, edges_[f], obs_index_[f]);
        }
      }
    }
  }

  bool operator==(const MultiplexGraphSeries& o) const {
    return num_nodes_ == o.num_nodes_ && num_layers_ == o.num_layers_ &&
           grid_ == o.grid_ && edges_ == o.edges_ && observed_ == o.observed_;
  }

 private:
  void check_node(int j) const {
    if (j < 0 || j >= num_nodes_) throw IndexOutOfRange("node out of range");
  }
  std::size_t flat(int d, int l, int t) const {
    if (d < 0 || d >= num_dyads_ || l < 0 || l >= num_layers_ || t < 0 ||
        t >= grid_.size()) {
      throw IndexOutOfRange("graph cell out of range");
    }
    return (static_cast<std::size_t>(d) * num_layers_ + l) * grid_.size() + t;
  }
  void build_obs_index() const {
    if (!obs_index_.empty()) return;
    obs_index_.assign(edges_.size(), -1);
    int slot = 0;
    for (std::size_t f = 0; f < edges_.size(); ++f) {
      if (observed_[f]) obs_index_[f] = slot++;
    }
    obs_count_ = slot;
  }

  int num_nodes_ = 0;
  int num_layers_ = 0;
  TimeGrid grid_;
  int num_dyads_ = 0;
  std::vector<std::int8_t> edges_;
  std::vector<std::uint8_t> observed_;
  mutable std::vector<int> obs_index_;
  mutable int obs_count_ = 0;
};

/// Real-valued tensor over (node, attribute, time) with an observation mask.
class AttributeSeries {
 public:
  AttributeSeries() = default;

  AttributeSeries(int num_nodes, int num_attrs, TimeGrid grid)
      : num_nodes_(num_nodes),
        num_attrs_(num_attrs),
        grid_(std::move(grid)),
        values_(static_cast<std::size_t>(num_nodes_) * num_attrs_ *
                    grid_.size(),
                0.0),
        observed_(values_.size(), 0) {
    if (num_attrs < 1) throw ShapeMismatch("need at least one attribute");
  }

  int num_nodes() const { return num_nodes_; }
  int num_attrs() const { return num_attrs_; }
  int num_times() const { return grid_.size(); }
  const TimeGrid& grid() const { return grid_; }

  bool is_observed(int j, int k, int t) const {
    return observed_[flat(j, k, t)] != 0;
  }
  double value(int j, int k, int t) const { return values_[flat(j, k, t)]; }

  void set_value(int j, int k, int t, double v) {
    if (!std::isfinite(v)) throw ShapeMismatch("attribute must be finite");
    values_[flat(j, k, t)] = v;
    observed_[flat(j, k, t)] = 1;
  }
  void hide(int j, int k, int t) {
    values_[flat(j, k, t)] = 0.0;
    observed_[flat(j, k, t)] = 0;
  }

  int observed_count() const {
    int n = 0;
    for (auto o : observed_) n += o;
    return n;
  }

  /// fn(node, attr, t, value) over mask-true cells.
  template <typename Fn>
  void for_each_observed(Fn&& fn) const {
    for (int j = 0; j < num_nodes_; ++j) {
      for (int k = 0; k < num_attrs_; ++k) {
        for (int t = 0; t < grid_.size(); ++t) {
          const std::size_t f = flat(j, k, t);
          if (observed_[f]) fn(j, k, t, values_[f]);
        }
      }
    }
  }

  bool operator==(const AttributeSeries& o) const {
    return num_nodes_ == o.num_nodes_ && num_attrs_ == o.num_attrs_ &&
           grid_ == o.grid_ && values_ == o.values_ &&
           observed_ == o.observed_;
  }

 private:
  std::size_t flat(int j, int k, int t) const {
    if (j < 0 || j >= num_nodes_ || k < 0 || k >= num_attrs_ || t < 0 ||
        t >= grid_.size()) {
      throw IndexOutOfRange("attribute cell out of range");
    }
    return (static_cast<std::size_t>(j) * num_attrs_ + k) * grid_.size() + t;
  }

  int num_nodes_ = 0;
  int num_attrs_ = 0;
  TimeGrid grid_;
  std::vector<double> values_;
  std::vector<std::uint8_t> observed_;
};

}  // namespace djl
