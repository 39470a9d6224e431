#include "deputy/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <openssl/evp.h>

#include "deputy/errors.hpp"
#include "deputy/text.hpp"

namespace deputy {

namespace {

[[noreturn]] void bad_value(std::string_view key, std::string_view value, const std::string& why) {
  throw Error(ErrorCode::kInvalidConfig,
              std::string(key) + ": " + why + " (got '" + std::string(value) + "')");
}

double to_real(std::string_view key, std::string_view value) {
  double x = 0.0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), x);
  if (ec != std::errc() || ptr != value.data() + value.size() || value.empty() || !std::isfinite(x)) {
    bad_value(key, value, "expected a finite real number");
  }
  return x;
}

template <typename Int>
Int to_int(std::string_view key, std::string_view value) {
  Int x = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), x);
  if (ec != std::errc() || ptr != value.data() + value.size() || value.empty()) {
    bad_value(key, value, "expected an integer");
  }
  return x;
}

bool to_bool(std::string_view key, std::string_view value) {
  if (value == "true") return true;
  if (value == "false") return false;
  bad_value(key, value, "expected true or false");
}

std::vector<int> to_int_list(std::string_view key, std::string_view value) {
  std::vector<int> out;
  if (trim(value).empty()) return out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = value.find(',', start);
    out.push_back(to_int<int>(key, trim(value.substr(start, comma == std::string_view::npos
                                                                   ? std::string_view::npos
                                                                   : comma - start))));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string bool_text(bool b) { return b ? "true" : "false"; }

std::string int_list_text(const std::vector<int>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i > 0) out += ',';
    out += std::to_string(xs[i]);
  }
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Splits "key = value" (comments and blanks yield an empty key).
std::pair<std::string_view, std::string_view> split_assignment(std::string_view line,
                                                               const std::string& where) {
  const std::size_t hash = line.find('#');
  if (hash != std::string_view::npos) line = line.substr(0, hash);
  line = trim(line);
  if (line.empty()) return {};
  const std::size_t eq = line.find('=');
  if (eq == std::string_view::npos) {
    throw Error(ErrorCode::kParseError, where + ": expected 'key = value'");
  }
  const std::string_view key = trim(line.substr(0, eq));
  if (key.empty()) throw Error(ErrorCode::kParseError, where + ": empty key");
  return {key, trim(line.substr(eq + 1))};
}

}  // namespace

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw Error(ErrorCode::kInvalidConfig, field + ": " + why);
  };
  try {
    dataset.validate();
  } catch (const Error& e) {
    fail("dataset", e.what());
  }
  try {
    augmentation.validate();
  } catch (const Error& e) {
    fail("augmentation", e.what());
  }
  if (encoder.output_dim < 1) fail("encoder.output_dim", "must be positive");
  for (int w : encoder.hidden) {
    if (w < 1) fail("encoder.hidden", "widths must be positive");
  }
  try {
    resolved_loss().validate();
  } catch (const Error& e) {
    fail("loss", e.what());
  }
  if (optimizer.name != "sgd_momentum") fail("optimizer.name", "only sgd_momentum is available");
  if (!(optimizer.base_lr >= 0.0)) fail("optimizer.base_lr", "must be nonnegative");
  if (!(optimizer.momentum_coeff >= 0.0 && optimizer.momentum_coeff < 1.0)) {
    fail("optimizer.momentum", "must lie in [0, 1)");
  }
  if (!(optimizer.weight_decay >= 0.0)) fail("optimizer.weight_decay", "must be nonnegative");
  if (epochs < 0) fail("train.epochs", "must be nonnegative");
  if (batch_size < 2) fail("train.batch_size", "must be at least 2");
  if (!(target_momentum >= 0.0 && target_momentum <= 1.0)) fail("train.target_momentum", "must lie in [0, 1]");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) fail("eval.train_fraction", "must lie in (0, 1)");
  const long n = static_cast<long>(dataset.num_classes) * dataset.samples_per_class;
  const long n_train = std::lround(train_fraction * static_cast<double>(n));
  if (n_train < batch_size) fail("train.batch_size", "exceeds the training split size");
  if (n - n_train < dataset.num_classes) fail("eval.train_fraction", "held-out split smaller than num_classes");
  if (probe_epochs < 0) fail("probe.epochs", "must be nonnegative");
  if (!(probe_lr > 0.0)) fail("probe.lr", "must be positive");
  const LossConfig loss_cfg = resolved_loss();
  if ((loss_cfg.variant == LossVariant::kRankK || loss_cfg.variant == LossVariant::kSmoothedRankK) &&
      loss_cfg.k > num_negatives()) {
    fail("loss.k", "exceeds the number of negatives m=" + std::to_string(num_negatives()));
  }
}

LossConfig ExperimentConfig::resolved_loss() const {
  LossConfig out = loss;
  if (loss_k_half) out.k = std::max(1, num_negatives() / 2);
  return out;
}

void apply_setting(ExperimentConfig& cfg, std::string_view key, std::string_view value) {
  value = trim(value);
  if (key == "seed") {
    cfg.seed = to_int<std::uint64_t>(key, value);
  } else if (key == "output_dir") {
    cfg.output_dir = std::string(value);
  } else if (key == "dataset.num_classes") {
    cfg.dataset.num_classes = to_int<int>(key, value);
  } else if (key == "dataset.samples_per_class") {
    cfg.dataset.samples_per_class = to_int<int>(key, value);
  } else if (key == "dataset.ambient_dim") {
    cfg.dataset.ambient_dim = to_int<int>(key, value);
  } else if (key == "dataset.center_separation") {
    cfg.dataset.center_separation = to_real(key, value);
  } else if (key == "dataset.noise_sigma") {
    cfg.dataset.noise_sigma = to_real(key, value);
  } else if (key == "augmentation.noise_sigma") {
    cfg.augmentation.additive_noise_sigma = to_real(key, value);
  } else if (key == "augmentation.dropout_rate") {
    cfg.augmentation.coordinate_dropout_rate = to_real(key, value);
  } else if (key == "augmentation.scale_lo") {
    cfg.augmentation.scale_lo = to_real(key, value);
  } else if (key == "augmentation.scale_hi") {
    cfg.augmentation.scale_hi = to_real(key, value);
  } else if (key == "encoder.hidden") {
    cfg.encoder.hidden = to_int_list(key, value);
  } else if (key == "encoder.output_dim") {
    cfg.encoder.output_dim = to_int<int>(key, value);
  } else if (key == "encoder.activation") {
    cfg.encoder.activation = parse_activation(value);
  } else if (key == "loss.variant") {
    cfg.loss.variant = parse_loss_variant(value);
  } else if (key == "loss.gamma") {
    cfg.loss.gamma = to_real(key, value);
  } else if (key == "loss.margin_c") {
    cfg.loss.margin_c = to_real(key, value);
  } else if (key == "loss.k") {
    if (value == "half") {
      cfg.loss_k_half = true;
    } else {
      cfg.loss_k_half = false;
      cfg.loss.k = to_int<int>(key, value);
    }
  } else if (key == "loss.tau") {
    cfg.loss.tau = to_real(key, value);
  } else if (key == "loss.symmetric") {
    cfg.loss.symmetric = to_bool(key, value);
  } else if (key == "loss.gamma_in_hardest") {
    cfg.loss.gamma_in_hardest = to_bool(key, value);
  } else if (key == "optimizer.name") {
    cfg.optimizer.name = std::string(value);
  } else if (key == "optimizer.base_lr") {
    cfg.optimizer.base_lr = to_real(key, value);
  } else if (key == "optimizer.momentum") {
    cfg.optimizer.momentum_coeff = to_real(key, value);
  } else if (key == "optimizer.weight_decay") {
    cfg.optimizer.weight_decay = to_real(key, value);
  } else if (key == "train.epochs") {
    cfg.epochs = to_int<int>(key, value);
  } else if (key == "train.batch_size") {
    cfg.batch_size = to_int<int>(key, value);
  } else if (key == "train.target_momentum") {
    cfg.target_momentum = to_real(key, value);
  } else if (key == "train.use_target") {
    cfg.use_target = to_bool(key, value);
  } else if (key == "eval.train_fraction") {
    cfg.train_fraction = to_real(key, value);
  } else if (key == "probe.epochs") {
    cfg.probe_epochs = to_int<int>(key, value);
  } else if (key == "probe.lr") {
    cfg.probe_lr = to_real(key, value);
  } else {
    throw Error(ErrorCode::kInvalidConfig, std::string(key) + ": unknown setting");
  }
}

ExperimentConfig parse_config(std::string_view text, const std::string& source) {
  ExperimentConfig cfg;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t nl = text.find('\n', start);
    const std::string_view line =
        text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
    ++line_no;
    const auto [key, value] = split_assignment(line, source + ":" + std::to_string(line_no));
    if (!key.empty()) apply_setting(cfg, key, value);
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  return parse_config(read_file(path), path);
}

std::vector<std::pair<std::string, std::string>> config_entries(const ExperimentConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> e = {
      {"seed", std::to_string(cfg.seed)},
      {"dataset.num_classes", std::to_string(cfg.dataset.num_classes)},
      {"dataset.samples_per_class", std::to_string(cfg.dataset.samples_per_class)},
      {"dataset.ambient_dim", std::to_string(cfg.dataset.ambient_dim)},
      {"dataset.center_separation", format_real(cfg.dataset.center_separation)},
      {"dataset.noise_sigma", format_real(cfg.dataset.noise_sigma)},
      {"augmentation.noise_sigma", format_real(cfg.augmentation.additive_noise_sigma)},
      {"augmentation.dropout_rate", format_real(cfg.augmentation.coordinate_dropout_rate)},
      {"augmentation.scale_lo", format_real(cfg.augmentation.scale_lo)},
      {"augmentation.scale_hi", format_real(cfg.augmentation.scale_hi)},
      {"encoder.hidden", int_list_text(cfg.encoder.hidden)},
      {"encoder.output_dim", std::to_string(cfg.encoder.output_dim)},
      {"encoder.activation", std::string(activation_name(cfg.encoder.activation))},
      {"loss.variant", std::string(loss_variant_name(cfg.loss.variant))},
      {"loss.gamma", format_real(cfg.loss.gamma)},
      {"loss.margin_c", format_real(cfg.loss.margin_c)},
      {"loss.k", cfg.loss_k_half ? std::string("half") : std::to_string(cfg.loss.k)},
      {"loss.tau", format_real(cfg.loss.tau)},
      {"loss.symmetric", bool_text(cfg.loss.symmetric)},
      {"loss.gamma_in_hardest", bool_text(cfg.loss.gamma_in_hardest)},
      {"optimizer.name", cfg.optimizer.name},
      {"optimizer.base_lr", format_real(cfg.optimizer.base_lr)},
      {"optimizer.momentum", format_real(cfg.optimizer.momentum_coeff)},
      {"optimizer.weight_decay", format_real(cfg.optimizer.weight_decay)},
      {"train.epochs", std::to_string(cfg.epochs)},
      {"train.batch_size", std::to_string(cfg.batch_size)},
      {"train.target_momentum", format_real(cfg.target_momentum)},
      {"train.use_target", bool_text(cfg.use_target)},
      {"eval.train_fraction", format_real(cfg.train_fraction)},
      {"probe.epochs", std::to_string(cfg.probe_epochs)},
      {"probe.lr", format_real(cfg.probe_lr)},
  };
  std::sort(e.begin(), e.end());
  return e;
}

std::string canonical_config(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& [key, value] : config_entries(cfg)) out += key + " = " + value + "\n";
  return out;
}

std::string config_hash(const ExperimentConfig& cfg) {
  const std::string text = canonical_config(cfg);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::kIoError, "SHA-256 digest failed");
  }
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return hex.str();
}

std::vector<GridVariant> parse_grid(std::string_view text, const std::string& source) {
  std::vector<GridVariant> variants;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t nl = text.find('\n', start);
    std::string_view line =
        text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
    ++line_no;
    const std::string where = source + ":" + std::to_string(line_no);
    const std::string_view bare = trim(line.substr(0, line.find('#')));
    if (!bare.empty() && bare.front() == '[') {
      if (bare.back() != ']' || bare.size() < 3) {
        throw Error(ErrorCode::kParseError, where + ": malformed section header");
      }
      const std::string name(trim(bare.substr(1, bare.size() - 2)));
      if (name.find_first_of("/\\ ") != std::string::npos || name == "." || name == "..") {
        throw Error(ErrorCode::kParseError, where + ": variant name must be a plain token");
      }
      for (const GridVariant& v : variants) {
        if (v.name == name) throw Error(ErrorCode::kParseError, where + ": duplicate variant '" + name + "'");
      }
      variants.push_back({name, {}});
    } else {
      const auto [key, value] = split_assignment(line, where);
      if (!key.empty()) {
        if (variants.empty()) throw Error(ErrorCode::kParseError, where + ": setting before any [variant]");
        if (key.substr(0, 5) != "loss.") {
          throw Error(ErrorCode::kInvalidConfig, where + ": grid variants may only set loss.* keys");
        }
        variants.back().overrides.emplace_back(std::string(key), std::string(value));
      }
    }
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }
  if (variants.empty()) throw Error(ErrorCode::kInvalidConfig, source + ": grid has no variants");
  return variants;
}

std::vector<GridVariant> load_grid(const std::string& path) {
  return parse_grid(read_file(path), path);
}

}  // namespace deputy
