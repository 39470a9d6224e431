#include "deputy/data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string_view>

#include "deputy/errors.hpp"
#include "deputy/text.hpp"

namespace deputy {

namespace {

std::string location(const std::string& path, std::size_t line) {
  return path + ":" + std::to_string(line);
}

bool names_non_finite(std::string_view token) {
  if (!token.empty() && (token.front() == '+' || token.front() == '-')) token.remove_prefix(1);
  std::string lower(token);
  for (char& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return lower == "nan" || lower == "inf" || lower == "infinity";
}

double parse_real(std::string_view token, const std::string& where) {
  token = trim(token);
  if (names_non_finite(token)) {
    throw Error(ErrorCode::kNonFiniteValue, where + ": non-finite value '" + std::string(token) + "'");
  }
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size() || token.empty()) {
    throw Error(ErrorCode::kParseError, where + ": cannot parse '" + std::string(token) + "'");
  }
  if (!std::isfinite(value)) {
    throw Error(ErrorCode::kNonFiniteValue, where + ": non-finite value '" + std::string(token) + "'");
  }
  return value;
}

}  // namespace

void SyntheticDatasetSpec::validate() const {
  if (num_classes < 2) throw Error(ErrorCode::kInvalidSpec, "num_classes must be >= 2");
  if (samples_per_class < 1) throw Error(ErrorCode::kInvalidSpec, "samples_per_class must be >= 1");
  if (ambient_dim < 2) throw Error(ErrorCode::kInvalidSpec, "ambient_dim must be >= 2");
  if (!(center_separation > 0.0) || !std::isfinite(center_separation)) {
    throw Error(ErrorCode::kInvalidSpec, "center_separation must be positive");
  }
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    throw Error(ErrorCode::kInvalidSpec, "noise_sigma must be nonnegative");
  }
}

Dataset generate_blobs(const SyntheticDatasetSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  Matrix centers(spec.num_classes, spec.ambient_dim);
  for (int c = 0; c < spec.num_classes; ++c) {
    Vector dir(spec.ambient_dim);
    do {
      for (int j = 0; j < spec.ambient_dim; ++j) dir(j) = normal(rng);
    } while (dir.norm() < 1e-12);
    centers.row(c) = (spec.center_separation / dir.norm()) * dir.transpose();
  }

  Dataset ds;
  ds.num_classes = spec.num_classes;
  const int n = spec.num_classes * spec.samples_per_class;
  ds.items.resize(n, spec.ambient_dim);
  ds.labels.resize(n);
  for (int c = 0; c < spec.num_classes; ++c) {
    for (int s = 0; s < spec.samples_per_class; ++s) {
      const int row = c * spec.samples_per_class + s;
      ds.labels[row] = c;
      for (int j = 0; j < spec.ambient_dim; ++j) {
        ds.items(row, j) = centers(c, j) + spec.noise_sigma * normal(rng);
      }
    }
  }
  return ds;
}

void AugmentationSpec::validate() const {
  if (!(additive_noise_sigma >= 0.0) || !std::isfinite(additive_noise_sigma)) {
    throw Error(ErrorCode::kInvalidSpec, "additive_noise_sigma must be nonnegative");
  }
  if (!(coordinate_dropout_rate >= 0.0 && coordinate_dropout_rate <= 1.0)) {
    throw Error(ErrorCode::kInvalidSpec, "coordinate_dropout_rate must lie in [0, 1]");
  }
  if (!(scale_lo > 0.0) || !(scale_lo <= scale_hi) || !std::isfinite(scale_hi)) {
    throw Error(ErrorCode::kInvalidSpec, "scale range must satisfy 0 < lo <= hi");
  }
}

Vector augment(const Vector& item, const AugmentationSpec& spec, std::uint64_t stream_seed) {
  spec.validate();
  std::mt19937_64 rng(stream_seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  const double scale = spec.scale_lo + (spec.scale_hi - spec.scale_lo) * unit(rng);
  Vector out(item.size());
  for (Eigen::Index j = 0; j < item.size(); ++j) {
    const bool dropped = unit(rng) < spec.coordinate_dropout_rate;
    out(j) = dropped ? 0.0 : item(j) * scale;
  }
  if (spec.additive_noise_sigma > 0.0) {
    for (Eigen::Index j = 0; j < item.size(); ++j) out(j) += spec.additive_noise_sigma * normal(rng);
  }
  return out;
}

std::size_t ContrastiveBatch::negative_owner(std::size_t anchor, std::size_t slot) const {
  const std::size_t other = slot / 2;
  return other < anchor ? other : other + 1;
}

Matrix gather_negatives(const Matrix& emb_a, const Matrix& emb_b, std::size_t anchor) {
  const auto b = static_cast<std::size_t>(emb_a.rows());
  Matrix out(2 * (b - 1), emb_a.cols());
  Eigen::Index slot = 0;
  for (std::size_t j = 0; j < b; ++j) {
    if (j == anchor) continue;
    out.row(slot++) = emb_a.row(j);
    out.row(slot++) = emb_b.row(j);
  }
  return out;
}

ContrastiveBatch make_contrastive_batch(const Dataset& dataset, std::vector<std::size_t> items,
                                        const AugmentationSpec& aug, RngState& rng) {
  if (items.size() < 2) {
    throw Error(ErrorCode::kBatchTooSmall, "a batch needs at least 2 items");
  }
  aug.validate();
  ContrastiveBatch batch;
  batch.items = std::move(items);
  const auto b = static_cast<Eigen::Index>(batch.items.size());
  batch.view_a.resize(b, dataset.items.cols());
  batch.view_b.resize(b, dataset.items.cols());
  batch.hidden_labels.reserve(b);
  for (Eigen::Index i = 0; i < b; ++i) {
    const auto row = static_cast<Eigen::Index>(batch.items[i]);
    const Vector item = dataset.items.row(row).transpose();
    const std::uint64_t seed_a = rng.engine();
    const std::uint64_t seed_b = rng.engine();
    batch.view_a.row(i) = augment(item, aug, seed_a).transpose();
    batch.view_b.row(i) = augment(item, aug, seed_b).transpose();
    batch.hidden_labels.push_back(dataset.labels[row]);
  }
  return batch;
}

ContrastiveBatch sample_contrastive_batch(const Dataset& dataset, int batch_size,
                                          const AugmentationSpec& aug, RngState& rng,
                                          const std::vector<std::size_t>& pool) {
  if (batch_size < 2) {
    throw Error(ErrorCode::kBatchTooSmall, "batch_size must be >= 2, got " + std::to_string(batch_size));
  }
  std::vector<std::size_t> candidates = pool;
  if (candidates.empty()) {
    candidates.resize(static_cast<std::size_t>(dataset.items.rows()));
    std::iota(candidates.begin(), candidates.end(), std::size_t{0});
  }
  const auto b = static_cast<std::size_t>(batch_size);
  if (b > candidates.size()) {
    throw Error(ErrorCode::kInvalidSpec, "batch_size exceeds the number of available items");
  }
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < b; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, candidates.size() - 1);
    std::swap(candidates[i], candidates[pick(rng.engine)]);
  }
  candidates.resize(b);
  return make_contrastive_batch(dataset, std::move(candidates), aug, rng);
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n,
                                                                            double fraction,
                                                                            std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }
  const auto head = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  std::vector<std::size_t> first(order.begin(), order.begin() + std::min(head, n));
  std::vector<std::size_t> second(order.begin() + std::min(head, n), order.end());
  return {std::move(first), std::move(second)};
}

LabeledEmbeddings read_labeled_embeddings(const std::string& embedding_path,
                                          const std::string& label_path) {
  std::ifstream emb(embedding_path);
  if (!emb) throw Error(ErrorCode::kIoError, "cannot open " + embedding_path);

  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(emb, line)) {
    throw Error(ErrorCode::kParseError, location(embedding_path, 1) + ": missing dim header");
  }
  std::string_view header = trim(line);
  if (header.substr(0, 4) != "dim=") {
    throw Error(ErrorCode::kParseError, location(embedding_path, 1) + ": expected 'dim=<d>'");
  }
  header.remove_prefix(4);
  int dim = 0;
  const auto [hp, hec] = std::from_chars(header.data(), header.data() + header.size(), dim);
  if (hec != std::errc() || hp != header.data() + header.size() || dim < 1) {
    throw Error(ErrorCode::kParseError, location(embedding_path, 1) + ": invalid dimension");
  }

  std::vector<double> values;
  std::size_t rows = 0;
  std::size_t blank_run_start = 0;
  while (std::getline(emb, line)) {
    ++line_no;
    const std::string_view content = trim(line);
    if (content.empty()) {
      if (blank_run_start == 0) blank_run_start = line_no;
      continue;
    }
    if (blank_run_start != 0) {
      throw Error(ErrorCode::kParseError, location(embedding_path, blank_run_start) + ": blank line inside data");
    }
    const std::string where = location(embedding_path, line_no);
    int count = 0;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = content.find(',', start);
      const std::string_view token =
          content.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
      values.push_back(parse_real(token, where));
      ++count;
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (count != dim) {
      throw Error(ErrorCode::kParseError,
                  where + ": expected " + std::to_string(dim) + " values, got " + std::to_string(count));
    }
    ++rows;
  }
  if (rows == 0) throw Error(ErrorCode::kParseError, embedding_path + ": no embedding rows");

  std::ifstream lab(label_path);
  if (!lab) throw Error(ErrorCode::kIoError, "cannot open " + label_path);
  std::vector<int> labels;
  line_no = 0;
  blank_run_start = 0;
  while (std::getline(lab, line)) {
    ++line_no;
    const std::string_view content = trim(line);
    if (content.empty()) {
      if (blank_run_start == 0) blank_run_start = line_no;
      continue;
    }
    if (blank_run_start != 0) {
      throw Error(ErrorCode::kParseError, location(label_path, blank_run_start) + ": blank line inside data");
    }
    int label = -1;
    const auto [lp, lec] = std::from_chars(content.data(), content.data() + content.size(), label);
    if (lec != std::errc() || lp != content.data() + content.size() || label < 0) {
      throw Error(ErrorCode::kParseError,
                  location(label_path, line_no) + ": invalid label '" + std::string(content) + "'");
    }
    labels.push_back(label);
  }
  if (labels.size() != rows) {
    throw Error(ErrorCode::kRowCountMismatch, std::to_string(rows) + " embeddings but " +
                                                  std::to_string(labels.size()) + " labels");
  }
  Matrix data = Eigen::Map<Matrix>(values.data(), static_cast<Eigen::Index>(rows), dim);
  return {EmbeddingBatch(std::move(data)), std::move(labels)};
}

void write_embeddings(const std::string& path, const Matrix& embeddings) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot open " + path + " for writing");
  out << "dim=" << embeddings.cols() << '\n';
  for (Eigen::Index i = 0; i < embeddings.rows(); ++i) {
    for (Eigen::Index j = 0; j < embeddings.cols(); ++j) {
      if (j > 0) out << ',';
      out << format_real(embeddings(i, j));
    }
    out << '\n';
  }
  if (!out) throw Error(ErrorCode::kIoError, "write failed for " + path);
}

void write_labels(const std::string& path, const std::vector<int>& labels) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot open " + path + " for writing");
  for (int label : labels) out << label << '\n';
  if (!out) throw Error(ErrorCode::kIoError, "write failed for " + path);
}

}  // namespace deputy
