#ifndef DEPUTY_CONFIG_HPP_
#define DEPUTY_CONFIG_HPP_

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "deputy/data.hpp"
#include "deputy/encoder.hpp"
#include "deputy/losses.hpp"

namespace deputy {

inline constexpr std::string_view kArtifactVersion = "deputy 1.0.0";

struct EncoderSpec {
  std::vector<int> hidden{64, 64};
  int output_dim = 16;
  Activation activation = Activation::kTanh;
};

struct OptimizerSpec {
  std::string name = "sgd_momentum";
  double base_lr = 0.05;
  double momentum_coeff = 0.9;
  double weight_decay = 1e-6;
};

// Full recipe of one run. Every seed used by a run is derived from `seed`.
struct ExperimentConfig {
  SyntheticDatasetSpec dataset;
  AugmentationSpec augmentation;
  EncoderSpec encoder;
  LossConfig loss;
  bool loss_k_half = true;  // k = m/2, resolved once the batch size is known
  OptimizerSpec optimizer;
  int epochs = 50;
  int batch_size = 32;
  double target_momentum = 0.99;
  bool use_target = true;
  double train_fraction = 0.8;
  int probe_epochs = 20;
  double probe_lr = 0.1;
  std::uint64_t seed = 0;
  std::string output_dir = "run";

  // Throws InvalidConfig naming the offending field.
  void validate() const;
  // Number of negatives per anchor under the batch construction.
  int num_negatives() const { return 2 * (batch_size - 1); }
  LossConfig resolved_loss() const;
};

// Applies one `key = value` assignment; unknown keys and bad values throw
// InvalidConfig with the key path.
void apply_setting(ExperimentConfig& cfg, std::string_view key, std::string_view value);

// Flat `key = value` lines, '#' comments, dotted section prefixes.
ExperimentConfig parse_config(std::string_view text, const std::string& source = "<config>");
ExperimentConfig load_config(const std::string& path);

// Sorted `key = value` lines of every effective setting except output_dir.
std::string canonical_config(const ExperimentConfig& cfg);
std::vector<std::pair<std::string, std::string>> config_entries(const ExperimentConfig& cfg);
// Hex SHA-256 of canonical_config.
std::string config_hash(const ExperimentConfig& cfg);

struct GridVariant {
  std::string name;
  // `loss.*` assignments applied on top of the base config.
  std::vector<std::pair<std::string, std::string>> overrides;
};

// `[name]` section headers, each followed by `loss.* = value` lines.
std::vector<GridVariant> parse_grid(std::string_view text, const std::string& source = "<grid>");
std::vector<GridVariant> load_grid(const std::string& path);

}  // namespace deputy

#endif  // DEPUTY_CONFIG_HPP_
