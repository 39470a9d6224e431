#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "deputy/config.hpp"
#include "deputy/errors.hpp"
#include "deputy/harness.hpp"

namespace {

constexpr int kExitInvalidInput = 1;
constexpr int kExitRuntimeFailure = 2;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Truncated triplet loss laboratory"};
  app.require_subcommand(1);

  std::string config_path;
  std::string grid_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output_dir;

  auto* train = app.add_subcommand("train", "Train one configuration and write its report");
  train->add_option("--config", config_path, "key = value config file")->required()->check(CLI::ExistingFile);
  train->add_option("--seed", seed, "Override the config seed");
  train->add_option("--output-dir", output_dir, "Override the config output_dir");

  auto* compare = app.add_subcommand("compare", "Run a grid of loss variants on a shared base config");
  compare->add_option("--config", config_path, "Base config file")->required()->check(CLI::ExistingFile);
  compare->add_option("--grid", grid_path, "Grid file of [variant] sections")->required()->check(CLI::ExistingFile);
  compare->add_option("--seed", seed, "Override the config seed");
  compare->add_option("--output-dir", output_dir, "Override the config output_dir");

  int m = 0;
  double p = 0.0;
  std::vector<int> ks;
  bool oracle = false;
  auto* bernoulli = app.add_subcommand("bernoulli", "Binomial tail risk table");
  bernoulli->add_option("--m", m, "Negatives per anchor")->required();
  bernoulli->add_option("--p", p, "Same-class probability of one negative")->required();
  bernoulli->add_option("--ks", ks, "Comma-separated deputy ranks")->required()->delimiter(',');
  bernoulli->add_flag("--oracle", oracle, "Also print the multiprecision evaluation");

  std::string embeddings_path;
  std::string labels_path;
  deputy::DiagnoseOptions diag;
  std::string variant_name = "rank_k";
  auto* diagnose = app.add_subcommand("diagnose", "Diagnostics for an embedding dump");
  diagnose->add_option("--embeddings", embeddings_path, "Embedding file")->required()->check(CLI::ExistingFile);
  diagnose->add_option("--labels", labels_path, "Label file")->required()->check(CLI::ExistingFile);
  diagnose->add_option("--k", diag.k, "Deputy rank")->required();
  diagnose->add_option("--variant", variant_name, "rank_k | smoothed_rank_k | hardest");
  diagnose->add_option("--batch-size", diag.batch_size, "Items per sampled batch");
  diagnose->add_option("--batches", diag.batches, "Number of sampled batches");
  diagnose->add_option("--seed", diag.seed, "Sampling seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInvalidInput;
  }

  try {
    if (*train) {
      deputy::ExperimentConfig cfg = deputy::load_config(config_path);
      if (seed) cfg.seed = *seed;
      if (output_dir) cfg.output_dir = *output_dir;
      const deputy::RunResult run = deputy::run_experiment(cfg);
      std::cout << run.report_document;
    } else if (*compare) {
      deputy::ExperimentConfig cfg = deputy::load_config(config_path);
      if (seed) cfg.seed = *seed;
      if (output_dir) cfg.output_dir = *output_dir;
      const deputy::GridResult grid = deputy::compare_grid(cfg, deputy::load_grid(grid_path));
      std::cout << grid.table_csv;
    } else if (*bernoulli) {
      std::cout << deputy::bernoulli_report(m, p, ks, oracle);
    } else if (*diagnose) {
      diag.variant = deputy::parse_loss_variant(variant_name);
      std::cout << deputy::diagnose_report(embeddings_path, labels_path, diag);
    }
  } catch (const deputy::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return deputy::is_input_error(e.code()) ? kExitInvalidInput : kExitRuntimeFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntimeFailure;
  }
  return 0;
}
