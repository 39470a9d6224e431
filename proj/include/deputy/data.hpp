#ifndef DEPUTY_DATA_HPP_
#define DEPUTY_DATA_HPP_

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "deputy/geometry.hpp"

namespace deputy {

struct SyntheticDatasetSpec {
  int num_classes = 10;
  int samples_per_class = 200;
  int ambient_dim = 32;
  double center_separation = 1.0;  // radius of the sphere holding the class centers
  double noise_sigma = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Dataset {
  Matrix items;             // N x ambient_dim
  std::vector<int> labels;  // N, balanced, in generation order
  int num_classes = 0;
};

Dataset generate_blobs(const SyntheticDatasetSpec& spec);

struct AugmentationSpec {
  double additive_noise_sigma = 0.0;
  double coordinate_dropout_rate = 0.0;
  double scale_lo = 1.0;
  double scale_hi = 1.0;

  void validate() const;
};

// Scale jitter, then coordinate dropout, then additive noise; a pure function
// of (item, spec, stream_seed).
Vector augment(const Vector& item, const AugmentationSpec& spec, std::uint64_t stream_seed);

// Explicit sampling state; nothing in this module touches global randomness.
struct RngState {
  explicit RngState(std::uint64_t seed) : engine(seed) {}
  std::mt19937_64 engine;
};

// Two augmented views of b distinct items. For anchor i the negatives are
// both views of every other item, ordered by batch position then view
// (a before b), so m = 2(b - 1).
struct ContrastiveBatch {
  std::vector<std::size_t> items;  // dataset row of each batch position
  Matrix view_a;
  Matrix view_b;
  std::vector<int> hidden_labels;

  std::size_t size() const { return items.size(); }
  std::size_t num_negatives() const { return 2 * (items.size() - 1); }
  // Batch position that owns negative slot `slot` of anchor position `anchor`.
  std::size_t negative_owner(std::size_t anchor, std::size_t slot) const;
};

// Rows of [emb_a; emb_b] that serve as negatives for `anchor`, in slot order.
Matrix gather_negatives(const Matrix& emb_a, const Matrix& emb_b, std::size_t anchor);

ContrastiveBatch make_contrastive_batch(const Dataset& dataset, std::vector<std::size_t> items,
                                        const AugmentationSpec& aug, RngState& rng);

// Samples b distinct rows from `pool` (all rows when empty) without replacement.
ContrastiveBatch sample_contrastive_batch(const Dataset& dataset, int batch_size,
                                          const AugmentationSpec& aug, RngState& rng,
                                          const std::vector<std::size_t>& pool = {});

// Deterministic shuffle split; the first part holds round(fraction * n) rows.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n,
                                                                            double fraction,
                                                                            std::uint64_t seed);

struct LabeledEmbeddings {
  EmbeddingBatch embeddings;
  std::vector<int> labels;
};

// Embedding file: "dim=<d>" then one comma-separated row per line.
// Label file: one nonnegative integer per line.
LabeledEmbeddings read_labeled_embeddings(const std::string& embedding_path,
                                          const std::string& label_path);
void write_embeddings(const std::string& path, const Matrix& embeddings);
void write_labels(const std::string& path, const std::vector<int>& labels);

}  // namespace deputy

#endif  // DEPUTY_DATA_HPP_
