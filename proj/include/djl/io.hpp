#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "djl/data.hpp"
#include "djl/errors.hpp"
#include "djl/model.hpp"
#include "djl/simulate.hpp"

namespace djl::io {

// ---------------------------------------------------------------------------
// primitive formatting: shortest round-trip representation for doubles so
// write -> read is bit-exact and re-runs are byte-identical
// ---------------------------------------------------------------------------

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, int line_no) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw SchemaError("line " + std::to_string(line_no) +
                      ": bad numeric field '" + std::string(s) + "'");
  }
  return v;
}

inline long parse_int(std::string_view s, int line_no) {
  long v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw SchemaError("line " + std::to_string(line_no) +
                      ": bad integer field '" + std::string(s) + "'");
  }
  return v;
}

inline bool parse_bool(std::string_view s, int line_no) {
  if (s == "1" || s == "true") return true;
  if (s == "0" || s == "false") return false;
  throw SchemaError("line " + std::to_string(line_no) +
                    ": bad boolean field '" + std::string(s) + "'");
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path() &&
      !std::filesystem::exists(path.parent_path())) {
    throw IoError("output directory does not exist: " +
                  path.parent_path().string());
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  return f;
}

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for reading: " + path.string());
  return f;
}

// ---------------------------------------------------------------------------
// dataset (edge list + attribute table + node id mapping)
// ---------------------------------------------------------------------------

struct Dataset {
  MultiplexGraphSeries graph;
  AttributeSeries attrs;
  std::vector<std::string> node_ids;  // dense index -> opaque id
};

inline std::string default_node_id(int j, int num_nodes) {
  int width = 1;
  for (int n = num_nodes - 1; n >= 10; n /= 10) ++width;
  std::ostringstream os;
  os << "n";
  std::string digits = std::to_string(j);
  os << std::string(static_cast<std::size_t>(width) - digits.size(), '0')
     << digits;
  return os.str();
}

inline std::vector<std::string> default_node_ids(int num_nodes) {
  std::vector<std::string> ids;
  ids.reserve(static_cast<std::size_t>(num_nodes));
  for (int j = 0; j < num_nodes; ++j) {
    ids.push_back(default_node_id(j, num_nodes));
  }
  return ids;
}

inline void write_edges_csv(const std::filesystem::path& path,
                            const MultiplexGraphSeries& graph,
                            const std::vector<std::string>& node_ids) {
  auto f = open_output(path);
  f << "time,layer,i,j,value,observed\n";
  for (int t = 0; t < graph.num_times(); ++t) {
    for (int l = 0; l < graph.num_layers(); ++l) {
      for (int d = 0; d < graph.num_dyads(); ++d) {
        const auto [i, j] = graph.dyad_nodes(d);
        const bool obs = graph.is_observed_dyad(d, l, t);
        const int value = obs ? graph.edge_dyad(d, l, t) : 0;
        f << format_double(graph.grid()[t]) << ',' << l << ','
          << node_ids[static_cast<std::size_t>(i)] << ','
          << node_ids[static_cast<std::size_t>(j)] << ',' << value << ','
          << (obs ? "true" : "false") << '\n';
      }
    }
  }
}

inline void write_attrs_csv(const std::filesystem::path& path,
                            const AttributeSeries& attrs,
                            const std::vector<std::string>& node_ids) {
  auto f = open_output(path);
  f << "time,node,attr,value,observed\n";
  for (int t = 0; t < attrs.num_times(); ++t) {
    for (int j = 0; j < attrs.num_nodes(); ++j) {
      for (int k = 0; k < attrs.num_attrs(); ++k) {
        const bool obs = attrs.is_observed(j, k, t);
        f << format_double(attrs.grid()[t]) << ','
          << node_ids[static_cast<std::size_t>(j)] << ',' << k << ','
          << format_double(obs ? attrs.value(j, k, t) : 0.0) << ','
          << (obs ? "true" : "false") << '\n';
      }
    }
  }
}

inline void write_nodes_csv(const std::filesystem::path& path,
                            const std::vector<std::string>& node_ids) {
  auto f = open_output(path);
  f << "index,id\n";
  for (std::size_t j = 0; j < node_ids.size(); ++j) {
    f << j << ',' << node_ids[j] << '\n';
  }
}

namespace detail {

struct RawEdge {
  double time;
  int layer;
  std::string i, j;
  int value;
  bool observed;
  int line_no;
};

struct RawAttr {
  double time;
  std::string node;
  int attr;
  double value;
  bool observed;
  int line_no;
};

inline void expect_header(std::ifstream& f, const std::string& expected,
                          const std::filesystem::path& path) {
  std::string line;
  if (!std::getline(f, line) || line != expected) {
    throw SchemaError(path.string() + ": expected header '" + expected + "'");
  }
}

}  // namespace detail

/// Reads the edge list and attribute table into dense tensors. Node ids are
/// mapped to dense indices in order of first appearance (edges file first);
/// dyads are canonicalized to i < j; duplicates are rejected with their line
/// number. Cells absent from a file are unobserved.
inline Dataset read_dataset(const std::filesystem::path& edges_path,
                            const std::filesystem::path& attrs_path) {
  std::vector<detail::RawEdge> raw_edges;
  std::vector<detail::RawAttr> raw_attrs;
  std::vector<std::string> node_ids;
  std::map<std::string, int> node_index;
  std::set<double> times;

  auto intern_node = [&](const std::string& id) {
    auto [it, inserted] = node_index.emplace(id, static_cast<int>(node_ids.size()));
    if (inserted) node_ids.push_back(id);
    return it->second;
  };

  {
    auto f = open_input(edges_path);
    detail::expect_header(f, "time,layer,i,j,value,observed", edges_path);
    std::string line;
    int line_no = 1;
    while (std::getline(f, line)) {
      ++line_no;
      if (line.empty()) continue;
      const auto fields = split_csv(line);
      if (fields.size() != 6) {
        throw SchemaError("line " + std::to_string(line_no) +
                          ": expected 6 fields");
      }
      detail::RawEdge e;
      e.time = parse_double(fields[0], line_no);
      e.layer = static_cast<int>(parse_int(fields[1], line_no));
      e.i = std::string(fields[2]);
      e.j = std::string(fields[3]);
      e.value = static_cast<int>(parse_int(fields[4], line_no));
      e.observed = parse_bool(fields[5], line_no);
      e.line_no = line_no;
      if (e.layer < 0) {
        throw SchemaError("line " + std::to_string(line_no) +
                          ": layer must be >= 0");
      }
      if (e.value != 0 && e.value != 1) {
        throw SchemaError("line " + std::to_string(line_no) +
                          ": edge value must be 0 or 1");
      }
      if (e.i == e.j) {
        throw SchemaError("line " + std::to_string(line_no) +
                          ": self dyad not allowed");
      }
      intern_node(e.i);
      intern_node(e.j);
      times.insert(e.time);
      raw_edges.push_back(std::move(e));
    }
  }
  {
    auto f = open_input(attrs_path);
    detail::expect_header(f, "time,node,attr,value,observed", attrs_path);
    std::string line;
    int line_no = 1;
    while (std::getline(f, line)) {
      ++line_no;
      if (line.empty()) continue;
      const auto fields = split_csv(line);
      if (fields.size() != 5) {
        throw SchemaError("line " + std::to_string(line_no) +
                          ": expected 5 fields");
      }
      detail::RawAttr a;
      a.time = parse_double(fields[0], line_no);
      a.node = std::string(fields[1]);
      a.attr = static_cast<int>(parse_int(fields[2], line_no));
      a.value = parse_double(fields[3], line_no);
      a.observed = parse_bool(fields[4], line_no);
      a.line_no = line_no;
      if (a.attr < 0) {
        throw SchemaError("line " + std::to_string(line_no) +
                          ": attr must be >= 0");
      }
      intern_node(a.node);
      times.insert(a.time);
      raw_attrs.push_back(std::move(a));
    }
  }
  if (raw_edges.empty()) throw SchemaError("edge list is empty");
  if (raw_attrs.empty()) throw SchemaError("attribute table is empty");

  int num_layers = 0;
  for (const auto& e : raw_edges) num_layers = std::max(num_layers, e.layer + 1);
  int num_attrs = 0;
  for (const auto& a : raw_attrs) num_attrs = std::max(num_attrs, a.attr + 1);
  const TimeGrid grid{std::vector<double>(times.begin(), times.end())};
  auto t_index = [&](double time) {
    return static_cast<int>(std::lower_bound(grid.times.begin(),
                                             grid.times.end(), time) -
                            grid.times.begin());
  };

  Dataset ds{MultiplexGraphSeries(static_cast<int>(node_ids.size()),
                                  num_layers, grid),
             AttributeSeries(static_cast<int>(node_ids.size()), num_attrs,
                             grid),
             node_ids};

  std::set<std::tuple<int, int, int>> seen_edges;  // (t, l, dyad)
  for (const auto& e : raw_edges) {
    const int i = node_index[e.i];
    const int j = node_index[e.j];
    const int d = ds.graph.dyad_index(i, j);
    const int t = t_index(e.time);
    if (!seen_edges.emplace(t, e.layer, d).second) {
      throw SchemaError("line " + std::to_string(e.line_no) +
                        ": duplicate edge record");
    }
    if (e.observed) {
      ds.graph.set_edge_dyad(d, e.layer, t, static_cast<std::int8_t>(e.value));
    }
  }
  std::set<std::tuple<int, int, int>> seen_attrs;  // (t, node, attr)
  for (const auto& a : raw_attrs) {
    const int j = node_index[a.node];
    const int t = t_index(a.time);
    if (!seen_attrs.emplace(t, j, a.attr).second) {
      throw SchemaError("line " + std::to_string(a.line_no) +
                        ": duplicate attribute record");
    }
    if (a.observed) ds.attrs.set_value(j, a.attr, t, a.value);
  }
  ds.graph.observed_count();  // freeze the lazy index before sharing
  return ds;
}

// ---------------------------------------------------------------------------
// truth ledgers
// ---------------------------------------------------------------------------

inline const char* scenario_name(Scenario s) {
  switch (s) {
    case Scenario::In: return "in";
    case Scenario::Missing: return "missing";
    case Scenario::Future: return "future";
  }
  return "?";
}

inline Scenario parse_scenario(std::string_view s, int line_no) {
  if (s == "in") return Scenario::In;
  if (s == "missing") return Scenario::Missing;
  if (s == "future") return Scenario::Future;
  throw SchemaError("line " + std::to_string(line_no) +
                    ": unknown scenario '" + std::string(s) + "'");
}

inline void write_edge_ledger(const std::filesystem::path& path,
                              const std::vector<HiddenEdge>& ledger,
                              const std::vector<std::string>& node_ids) {
  auto f = open_output(path);
  f << "time,layer,i,j,value,scenario\n";
  for (const HiddenEdge& h : ledger) {
    f << format_double(h.time) << ',' << h.layer << ','
      << node_ids[static_cast<std::size_t>(h.i)] << ','
      << node_ids[static_cast<std::size_t>(h.j)] << ','
      << static_cast<int>(h.value) << ',' << scenario_name(h.scenario) << '\n';
  }
}

inline void write_attr_ledger(const std::filesystem::path& path,
                              const std::vector<HiddenAttr>& ledger,
                              const std::vector<std::string>& node_ids) {
  auto f = open_output(path);
  f << "time,node,attr,value,scenario\n";
  for (const HiddenAttr& h : ledger) {
    f << format_double(h.time) << ',' << node_ids[static_cast<std::size_t>(h.node)]
      << ',' << h.attr << ',' << format_double(h.value) << ','
      << scenario_name(h.scenario) << '\n';
  }
}

/// Hidden-edge ledger with node ids resolved against `node_ids` (entries for
/// unknown ids are rejected).
inline std::vector<HiddenEdge> read_edge_ledger(
    const std::filesystem::path& path,
    const std::vector<std::string>& node_ids) {
  std::map<std::string, int> index;
  for (std::size_t j = 0; j < node_ids.size(); ++j) {
    index[node_ids[j]] = static_cast<int>(j);
  }
  auto f = open_input(path);
  detail::expect_header(f, "time,layer,i,j,value,scenario", path);
  std::vector<HiddenEdge> out;
  std::string line;
  int line_no = 1;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_csv(line);
    if (fields.size() != 6) {
      throw SchemaError("line " + std::to_string(line_no) +
                        ": expected 6 fields");
    }
    HiddenEdge h;
    h.time = parse_double(fields[0], line_no);
    h.layer = static_cast<int>(parse_int(fields[1], line_no));
    const auto it_i = index.find(std::string(fields[2]));
    const auto it_j = index.find(std::string(fields[3]));
    if (it_i == index.end() || it_j == index.end()) {
      throw SchemaError("line " + std::to_string(line_no) +
                        ": unknown node id");
    }
    h.i = it_i->second;
    h.j = it_j->second;
    h.value = static_cast<std::int8_t>(parse_int(fields[4], line_no));
    h.scenario = parse_scenario(fields[5], line_no);
    out.push_back(h);
  }
  return out;
}

inline std::vector<HiddenAttr> read_attr_ledger(
    const std::filesystem::path& path,
    const std::vector<std::string>& node_ids) {
  std::map<std::string, int> index;
  for (std::size_t j = 0; j < node_ids.size(); ++j) {
    index[node_ids[j]] = static_cast<int>(j);
  }
  auto f = open_input(path);
  detail::expect_header(f, "time,node,attr,value,scenario", path);
  std::vector<HiddenAttr> out;
  std::string line;
  int line_no = 1;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_csv(line);
    if (fields.size() != 5) {
      throw SchemaError("line " + std::to_string(line_no) +
                        ": expected 5 fields");
    }
    HiddenAttr h;
    h.time = parse_double(fields[0], line_no);
    const auto it = index.find(std::string(fields[1]));
    if (it == index.end()) {
      throw SchemaError("line " + std::to_string(line_no) +
                        ": unknown node id");
    }
    h.node = it->second;
    h.attr = static_cast<int>(parse_int(fields[2], line_no));
    h.value = parse_double(fields[3], line_no);
    h.scenario = parse_scenario(fields[4], line_no);
    out.push_back(h);
  }
  return out;
}

// ---------------------------------------------------------------------------
// binary posterior archive: magic, version, dimension block, then draws
// (draw-major little-endian 8-byte floats)
// ---------------------------------------------------------------------------

inline constexpr char kArchiveMagic[4] = {'D', 'J', 'L', 'A'};
inline constexpr std::uint32_t kArchiveVersion = 1;

namespace detail {

inline void put_u32(std::ofstream& f, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  f.write(b, 4);
}

inline void put_u64(std::ofstream& f, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  f.write(b, 8);
}

inline void put_i32(std::ofstream& f, std::int32_t v) {
  put_u32(f, static_cast<std::uint32_t>(v));
}

inline void put_f64(std::ofstream& f, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(f, bits);
}

inline std::uint32_t get_u32(std::ifstream& f) {
  unsigned char b[4];
  f.read(reinterpret_cast<char*>(b), 4);
  if (!f) throw VersionError("archive truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline std::uint64_t get_u64(std::ifstream& f) {
  unsigned char b[8];
  f.read(reinterpret_cast<char*>(b), 8);
  if (!f) throw VersionError("archive truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline std::int32_t get_i32(std::ifstream& f) {
  return static_cast<std::int32_t>(get_u32(f));
}

inline double get_f64(std::ifstream& f) {
  const std::uint64_t bits = get_u64(f);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

inline void put_beta(std::ofstream& f, const KernelParams& b) {
  put_f64(f, b.sigma_bias_sq);
  put_f64(f, b.sigma_weight_sq);
}

inline void get_beta(std::ifstream& f, KernelParams& b, int depth) {
  b.sigma_bias_sq = get_f64(f);
  b.sigma_weight_sq = get_f64(f);
  b.depth = depth;
}

}  // namespace detail

inline void write_archive(const std::filesystem::path& path,
                          const PosteriorArchive& archive) {
  using namespace detail;
  if (archive.draws.empty()) throw IoError("refusing to write empty archive");
  auto f = open_output(path);
  const LatentState& first = archive.draws.front();
  f.write(kArchiveMagic, 4);
  put_u32(f, kArchiveVersion);
  put_i32(f, first.num_nodes);
  put_i32(f, first.num_layers);
  put_i32(f, first.num_attrs);
  put_i32(f, first.num_times);
  put_i32(f, first.rank_shared);
  put_i32(f, first.rank_layer);
  put_i32(f, archive.config.depth);
  put_i32(f, static_cast<std::int32_t>(archive.draws.size()));
  put_u32(f, first.xi_attr ? 0u : 1u);  // joint mode flag
  put_u64(f, archive.provenance.seed);
  put_i32(f, archive.provenance.sweep_count);
  put_i32(f, archive.provenance.num_chains);
  put_i32(f, archive.config.burn_in);
  put_i32(f, archive.config.keep);
  put_i32(f, archive.config.thin);
  put_f64(f, archive.config.a_sigma);
  put_f64(f, archive.config.b_sigma);
  put_f64(f, archive.config.jitter);
  put_i32(f, static_cast<std::int32_t>(archive.config.hyper_grid.size()));
  for (const auto& [bias, weight] : archive.config.hyper_grid) {
    put_f64(f, bias);
    put_f64(f, weight);
  }
  for (double t : archive.grid.times) put_f64(f, t);
  for (std::size_t q = 0; q < archive.draws.size(); ++q) {
    const LatentState& s = archive.draws[q];
    put_i32(f, archive.chain_of_draw.empty()
                   ? 0
                   : archive.chain_of_draw[q]);
    for (Eigen::Index i = 0; i < s.mu.size(); ++i) put_f64(f, s.mu(i));
    for (const FunctionTable* tbl : {&s.eta, &s.zeta, &s.xi, &s.alpha}) {
      for (double v : tbl->raw()) put_f64(f, v);
    }
    if (s.xi_attr) {
      for (double v : s.xi_attr->raw()) put_f64(f, v);
    }
    for (Eigen::Index k = 0; k < s.sigma2.size(); ++k) put_f64(f, s.sigma2(k));
    put_beta(f, s.beta_mu);
    put_beta(f, s.beta_eta);
    put_beta(f, s.beta_zeta);
    put_beta(f, s.beta_xi);
    put_beta(f, s.beta_alpha);
    if (s.xi_attr) put_beta(f, s.beta_xi_attr);
  }
  if (!f) throw IoError("archive write failed: " + path.string());
}

inline PosteriorArchive read_archive(const std::filesystem::path& path) {
  using namespace detail;
  auto f = open_input(path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kArchiveMagic, 4) != 0) {
    throw VersionError("bad archive magic: " + path.string());
  }
  const std::uint32_t version = get_u32(f);
  if (version != kArchiveVersion) {
    throw VersionError("unsupported archive version " +
                       std::to_string(version));
  }
  const int num_nodes = get_i32(f);
  const int num_layers = get_i32(f);
  const int num_attrs = get_i32(f);
  const int num_times = get_i32(f);
  const int rank_shared = get_i32(f);
  const int rank_layer = get_i32(f);
  const int depth = get_i32(f);
  const int keep = get_i32(f);
  const bool joint_mode = get_u32(f) != 0;
  if (num_nodes < 2 || num_layers < 1 || num_attrs < 1 || num_times < 1 ||
      rank_shared < 1 || rank_layer < 1 || depth < 0 || keep < 1) {
    throw VersionError("archive header has invalid dimensions");
  }

  PosteriorArchive archive;
  archive.provenance.seed = get_u64(f);
  archive.provenance.sweep_count = get_i32(f);
  archive.provenance.num_chains = get_i32(f);
  archive.config.rank_shared = rank_shared;
  archive.config.rank_layer = rank_layer;
  archive.config.depth = depth;
  archive.config.joint_mode = joint_mode;
  archive.config.seed = archive.provenance.seed;
  archive.config.burn_in = get_i32(f);
  archive.config.keep = get_i32(f);
  archive.config.thin = get_i32(f);
  archive.config.a_sigma = get_f64(f);
  archive.config.b_sigma = get_f64(f);
  archive.config.jitter = get_f64(f);
  const int grid_n = get_i32(f);
  if (grid_n < 0 || grid_n > 1000000) {
    throw VersionError("archive header has invalid hyper grid size");
  }
  archive.config.hyper_grid.clear();
  for (int i = 0; i < grid_n; ++i) {
    const double bias = get_f64(f);
    const double weight = get_f64(f);
    archive.config.hyper_grid.emplace_back(bias, weight);
  }
  std::vector<double> times(static_cast<std::size_t>(num_times));
  for (double& t : times) t = get_f64(f);
  archive.grid = TimeGrid{std::move(times)};

  archive.draws.reserve(static_cast<std::size_t>(keep));
  for (int q = 0; q < keep; ++q) {
    LatentState s =
        LatentState::zeros(num_nodes, num_layers, num_attrs, num_times,
                           rank_shared, rank_layer, joint_mode, depth);
    archive.chain_of_draw.push_back(get_i32(f));
    for (Eigen::Index i = 0; i < s.mu.size(); ++i) s.mu(i) = get_f64(f);
    for (FunctionTable* tbl : {&s.eta, &s.zeta, &s.xi, &s.alpha}) {
      for (double& v : tbl->raw()) v = get_f64(f);
    }
    if (s.xi_attr) {
      for (double& v : s.xi_attr->raw()) v = get_f64(f);
    }
    for (Eigen::Index k = 0; k < s.sigma2.size(); ++k) s.sigma2(k) = get_f64(f);
    get_beta(f, s.beta_mu, depth);
    get_beta(f, s.beta_eta, depth);
    get_beta(f, s.beta_zeta, depth);
    get_beta(f, s.beta_xi, depth);
    get_beta(f, s.beta_alpha, depth);
    if (s.xi_attr) get_beta(f, s.beta_xi_attr, depth);
    archive.draws.push_back(std::move(s));
  }
  return archive;
}

}  // namespace djl::io
