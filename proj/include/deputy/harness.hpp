#ifndef DEPUTY_HARNESS_HPP_
#define DEPUTY_HARNESS_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "deputy/config.hpp"
#include "deputy/diagnostics.hpp"

namespace deputy {

struct EpochMetrics {
  int epoch = 0;  // 0 is the untrained pass, no parameter updates
  double mean_loss = 0.0;
  double learning_rate = 0.0;  // rate in effect at the end of the epoch
  double pr_omega_given_a = 0.0;
  std::optional<double> pr_omega_given_b;
  FrequencyCounts counts;
};

struct RunResult {
  std::string config_hash;
  std::vector<EpochMetrics> per_epoch;
  DiagnosticsReport initial;
  DiagnosticsReport final;
  double final_loss = 0.0;
  std::string report_document;  // JSON text, identical to report.json
};

// Trains per `cfg` and evaluates the result. With `write_files`, writes
// report.json, metrics.csv, checkpoint.bin, embeddings.csv and labels.txt
// under cfg.output_dir.
RunResult run_experiment(const ExperimentConfig& cfg, bool write_files = true);

struct GridRow {
  std::string variant;
  RunResult run;
};

struct GridResult {
  std::vector<GridRow> rows;
  std::string table_csv;
};

// One run per variant, each at <output_dir>/<variant>, sharing dataset and
// seed; writes comparison.csv at <output_dir>.
GridResult compare_grid(const ExperimentConfig& base, const std::vector<GridVariant>& variants,
                        bool write_files = true);

// Report produced by the `bernoulli` subcommand, as JSON text.
std::string bernoulli_report(int m, double p, const std::vector<int>& ks, bool with_oracle);

struct DiagnoseOptions {
  int k = 1;
  LossVariant variant = LossVariant::kRankK;
  int batch_size = 32;
  int batches = 1000;
  double train_fraction = 0.8;
  int probe_epochs = 20;
  double probe_lr = 0.1;
  std::uint64_t seed = 0;
};

// Diagnostics on an external embedding dump, as JSON text. Omega is measured
// over random batches of single embeddings (m = batch_size - 1).
std::string diagnose_report(const std::string& embedding_path, const std::string& label_path,
                            const DiagnoseOptions& options);

// Mixes a run seed with a stream tag into an independent 64-bit seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace deputy

#endif  // DEPUTY_HARNESS_HPP_
