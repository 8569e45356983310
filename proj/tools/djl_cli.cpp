#include <cstdint>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "djl/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{
      "djl: Bayesian joint inference for partially observed dynamic "
      "multiplex graphs and co-evolving nodal attributes"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out_dir;
  int chains = 0;
  double threshold = 0.0;
  bool bernoulli = false;

  app.add_option("--config", config_path, "run configuration file")
      ->required();
  app.add_option("--seed", seed, "override the config seed")
      ->each([&](const std::string&) { seed_set = true; });
  app.add_option("--out", out_dir, "directory for inputs/outputs");

  CLI::App* sim = app.add_subcommand("simulate", "generate a masked dataset");
  CLI::App* fit = app.add_subcommand("fit", "run the Gibbs sampler");
  fit->add_option("--chains", chains, "number of chains with derived seeds");
  CLI::App* predict =
      app.add_subcommand("predict", "score edges and predict attributes");
  predict->add_flag("--bernoulli-scores", bernoulli,
                    "use the Bernoulli-resampling edge score");
  predict->add_option("--threshold", threshold,
                      "edge decision threshold in (0, 1)");
  CLI::App* evaluate =
      app.add_subcommand("evaluate", "compute metrics against the ledger");
  CLI::App* align =
      app.add_subcommand("align", "Procrustes-align latent positions");

  CLI11_PARSE(app, argc, argv);

  try {
    djl::cli::RunConfig c = djl::cli::load_config(config_path);
    if (seed_set) c.seed = seed;
    if (!out_dir.empty()) c.out_dir = out_dir;
    if (chains > 0) c.chains = chains;
    if (threshold > 0.0) c.threshold = threshold;
    if (bernoulli) c.bernoulli_scores = true;

    if (sim->parsed()) {
      djl::cli::cmd_simulate(c);
    } else if (fit->parsed()) {
      djl::cli::cmd_fit(c);
    } else if (predict->parsed()) {
      djl::cli::cmd_predict(c);
    } else if (evaluate->parsed()) {
      djl::cli::cmd_evaluate(c);
    } else if (align->parsed()) {
      djl::cli::cmd_align(c);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return djl::cli::exit_code_for(e);
  }
  return 0;
}
