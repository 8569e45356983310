#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "djl/cli.hpp"

using namespace djl;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("djl_cli_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(f), {});
}

fs::path write_config(const fs::path& dir, const std::string& body) {
  const fs::path p = dir / "config.json";
  std::ofstream f(p);
  f << body;
  return p;
}

const char* kSmallConfig = R"({
  "schema_version": 1,
  "seed": 11,
  "data": {"nodes": 8, "layers": 2, "attrs": 2, "times": 6},
  "simulate": {
    "scheme": 1,
    "rank_shared": 2, "rank_layer": 2, "depth": 1,
    "kernel": {"sigma_bias_sq": 0.01, "sigma_weight_sq": 0.4},
    "standardize_attributes": true,
    "mask": {"time_select_prob": 0.4, "edge_drop_prob": 0.5,
             "holdout_future_times": 1}
  },
  "fit": {"rank_shared": 2, "rank_layer": 2, "depth": 1,
          "burn_in": 30, "keep": 40, "thin": 1,
          "a_sigma": 2.0, "b_sigma": 1.0, "jitter": 1e-8,
          "joint_mode": true},
  "predict": {"threshold": 0.5, "future_times": [7]},
  "align": {"time_indices": [0, 3], "gram": true}
})";

}  // namespace

TEST_CASE("config loading validates schema", "[cli]") {
  TempDir dir;
  SECTION("missing schema version") {
    const auto p = write_config(dir.path, R"({"seed": 1})");
    CHECK_THROWS_AS(cli::load_config(p), ConfigError);
  }
  SECTION("bad scheme") {
    const auto p = write_config(
        dir.path, R"({"schema_version": 1, "simulate": {"scheme": 9}})");
    CHECK_THROWS_AS(cli::load_config(p), ConfigError);
  }
  SECTION("parse error") {
    const auto p = write_config(dir.path, "{nope");
    CHECK_THROWS_AS(cli::load_config(p), ConfigError);
  }
  SECTION("valid config") {
    const auto p = write_config(dir.path, kSmallConfig);
    const cli::RunConfig c = cli::load_config(p);
    CHECK(c.seed == 11);
    CHECK(c.nodes == 8);
    CHECK(c.mask.holdout_future_times == 1);
    CHECK(c.model.keep == 40);
    CHECK(c.future_times == std::vector<double>{7.0});
  }
}

TEST_CASE("full pipeline runs end to end", "[cli][pipeline]") {
  TempDir dir;
  const auto cfg_path = write_config(dir.path, kSmallConfig);
  cli::RunConfig c = cli::load_config(cfg_path);
  c.out_dir = dir.path.string();
  std::ostringstream log;

  cli::cmd_simulate(c, log);
  // dyad-cell record count: 28 dyads * 2 layers * 6 times
  {
    std::ifstream f(dir.path / "edges.csv");
    int lines = 0;
    std::string line;
    while (std::getline(f, line)) ++lines;
    CHECK(lines == 1 + 28 * 2 * 6);
  }

  cli::cmd_fit(c, log);
  const PosteriorArchive arch =
      io::read_archive(dir.path / "archive.bin");
  CHECK(arch.draws.size() == 40);
  CHECK(fs::exists(dir.path / "diagnostics.txt"));

  cli::cmd_predict(c, log);
  {
    std::ifstream f(dir.path / "predictions_edges.csv");
    std::string header;
    std::getline(f, header);
    CHECK(header == "scenario,time,layer,i,j,probability,predicted");
    std::string line;
    int rows = 0;
    bool saw_future = false;
    while (std::getline(f, line)) {
      ++rows;
      const auto fields = io::split_csv(line);
      REQUIRE(fields.size() == 7);
      const double prob = io::parse_double(fields[5], 0);
      CHECK(prob >= 0.0);
      CHECK(prob <= 1.0);
      if (fields[0] == "future") saw_future = true;
    }
    CHECK(saw_future);
    CHECK(rows >= 28 * 2 * 6);
  }

  const auto metrics = cli::cmd_evaluate(c, log);
  bool saw_in_auc = false, saw_missing_mspe = false, saw_future_cov = false;
  for (const auto& r : metrics) {
    if (r.scenario == "in" && r.metric == "auc") {
      saw_in_auc = true;
      CHECK(r.value > 0.5);
    }
    if (r.scenario == "missing" && r.metric == "mspe") {
      saw_missing_mspe = true;
    }
    if (r.scenario == "future" && r.metric == "coverage95") {
      saw_future_cov = true;
    }
  }
  CHECK(saw_in_auc);
  CHECK(saw_missing_mspe);
  CHECK(saw_future_cov);
  CHECK(fs::exists(dir.path / "metrics.csv"));

  cli::cmd_align(c, log);
  {
    std::ifstream f(dir.path / "positions.csv");
    std::string header;
    std::getline(f, header);
    CHECK(header == "time,node,v1,v2,rank_deficient");
    int rows = 0;
    std::string line;
    while (std::getline(f, line)) ++rows;
    CHECK(rows == 8 * 2);  // J rows per requested time
  }
  CHECK(fs::exists(dir.path / "gram_t0.csv"));
  {
    std::ifstream f(dir.path / "gram_t0.csv");
    int rows = 0;
    std::string line;
    while (std::getline(f, line)) {
      CHECK(io::split_csv(line).size() == 8);
      ++rows;
    }
    CHECK(rows == 8);
  }
}

TEST_CASE("pipeline reruns are byte-identical", "[cli][determinism]") {
  TempDir a, b;
  for (const TempDir* dir : {&a, &b}) {
    const auto cfg_path = write_config(dir->path, kSmallConfig);
    cli::RunConfig c = cli::load_config(cfg_path);
    c.out_dir = dir->path.string();
    std::ostringstream log;
    cli::cmd_simulate(c, log);
    cli::cmd_fit(c, log);
    cli::cmd_predict(c, log);
  }
  for (const char* name :
       {"edges.csv", "attributes.csv", "ledger_edges.csv",
        "ledger_attributes.csv", "archive.bin", "predictions_edges.csv",
        "predictions_attributes.csv"}) {
    INFO(name);
    CHECK(slurp(a.path / name) == slurp(b.path / name));
  }
}

TEST_CASE("multi-chain fit merges draws with chain labels", "[cli]") {
  TempDir dir;
  const auto cfg_path = write_config(dir.path, kSmallConfig);
  cli::RunConfig c = cli::load_config(cfg_path);
  c.out_dir = dir.path.string();
  c.chains = 2;
  std::ostringstream log;
  cli::cmd_simulate(c, log);
  cli::cmd_fit(c, log);
  const PosteriorArchive arch = io::read_archive(dir.path / "archive.bin");
  CHECK(arch.draws.size() == 80);  // keep = 40 per chain
  CHECK(arch.provenance.num_chains == 2);
  REQUIRE(arch.chain_of_draw.size() == 80);
  CHECK(arch.chain_of_draw.front() == 0);
  CHECK(arch.chain_of_draw.back() == 1);
  // chains differ (derived seeds)
  CHECK(arch.draws.front().mu != arch.draws[40].mu);
}

TEST_CASE("simulate without an output directory raises IoError", "[cli]") {
  TempDir dir;
  const auto cfg_path = write_config(dir.path, kSmallConfig);
  cli::RunConfig c = cli::load_config(cfg_path);
  c.out_dir = (dir.path / "missing_subdir").string();
  std::ostringstream log;
  CHECK_THROWS_AS(cli::cmd_simulate(c, log), IoError);
}

TEST_CASE("predict with an empty future set emits no future rows", "[cli]") {
  TempDir dir;
  const auto cfg_path = write_config(dir.path, kSmallConfig);
  cli::RunConfig c = cli::load_config(cfg_path);
  c.out_dir = dir.path.string();
  c.future_times.clear();
  std::ostringstream log;
  cli::cmd_simulate(c, log);
  cli::cmd_fit(c, log);
  cli::cmd_predict(c, log);
  std::ifstream f(dir.path / "predictions_edges.csv");
  std::string line;
  std::getline(f, line);
  while (std::getline(f, line)) {
    CHECK(io::split_csv(line)[0] != "future");
  }
}

TEST_CASE("evaluate detects key mismatches", "[cli]") {
  TempDir dir;
  const auto cfg_path = write_config(dir.path, kSmallConfig);
  cli::RunConfig c = cli::load_config(cfg_path);
  c.out_dir = dir.path.string();
  std::ostringstream log;
  cli::cmd_simulate(c, log);
  cli::cmd_fit(c, log);
  cli::cmd_predict(c, log);
  // corrupt the edge ledger: drop all missing-scenario rows
  const fs::path ledger = dir.path / "ledger_edges.csv";
  std::vector<std::string> kept;
  {
    std::ifstream f(ledger);
    std::string line;
    while (std::getline(f, line)) {
      if (line.find(",missing") == std::string::npos) kept.push_back(line);
    }
  }
  {
    std::ofstream f(ledger);
    for (const auto& l : kept) f << l << '\n';
  }
  CHECK_THROWS_AS(cli::cmd_evaluate(c, log), KeyMismatch);
}

TEST_CASE("exit codes map error classes", "[cli]") {
  CHECK(cli::exit_code_for(ConfigError("x")) == 2);
  CHECK(cli::exit_code_for(SchemaError("x")) == 3);
  CHECK(cli::exit_code_for(IoError("x")) == 3);
  CHECK(cli::exit_code_for(VersionError("x")) == 3);
  CHECK(cli::exit_code_for(KeyMismatch("x")) == 3);
  CHECK(cli::exit_code_for(GridMismatch("x")) == 3);
  CHECK(cli::exit_code_for(FactorizationFailure("x")) == 4);
  CHECK(cli::exit_code_for(SamplerStall("x")) == 4);
  CHECK(cli::exit_code_for(std::runtime_error("x")) == 1);
}
