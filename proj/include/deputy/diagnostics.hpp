#ifndef DEPUTY_DIAGNOSTICS_HPP_
#define DEPUTY_DIAGNOSTICS_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "deputy/geometry.hpp"
#include "deputy/losses.hpp"

namespace deputy {

// Mean pairwise Euclidean distance between class centers, measured after
// dividing every embedding by the pooled within-class standard deviation.
double class_divergence(const EmbeddingBatch& embeddings, const std::vector<int>& labels);

// What a loss saw for one anchor: which batch positions its negatives belong
// to, in ascending-distance order.
struct AnchorObservation {
  std::size_t anchor_position = 0;
  std::vector<std::size_t> negatives_sorted;
};

struct BatchObservation {
  std::vector<int> labels;  // hidden label of each batch position
  std::vector<AnchorObservation> anchors;
};

// Builds an anchor observation from the raw negative distances and the batch
// position owning each negative slot.
AnchorObservation observe_anchor(std::size_t anchor_position, const std::vector<double>& distances,
                                 const std::vector<std::size_t>& owners);

struct FrequencyCounts {
  long batches_total = 0;
  long batches_b = 0;
  long batches_omega = 0;
  long batches_omega_and_b = 0;
};

struct FalseNegativeFrequencies {
  double pr_omega_given_a = 0.0;
  std::optional<double> pr_omega_given_b;
  FrequencyCounts counts;
};

// Streaming form of false_negative_frequencies.
class FalseNegativeCounter {
 public:
  FalseNegativeCounter(int k, LossVariant variant) : k_(k), variant_(variant) {}

  // Returns whether the batch triggered Omega.
  bool add(const BatchObservation& batch);
  void merge(const FalseNegativeCounter& other);
  const FrequencyCounts& counts() const { return counts_; }
  // Throws NoBatches when nothing was added.
  FalseNegativeFrequencies result() const;

 private:
  int k_;
  LossVariant variant_;
  FrequencyCounts counts_;
};

// Omega: some anchor's deputy negative (any contributing rank for the
// smoothed variant) shares the anchor's class. B: the batch holds two items
// of one class. A: every batch.
FalseNegativeFrequencies false_negative_frequencies(const std::vector<BatchObservation>& batches,
                                                    int k, LossVariant variant);

struct KMeansResult {
  std::vector<int> assignment;
  double inertia = 0.0;
};

KMeansResult kmeans(const Matrix& points, int num_clusters, std::uint64_t seed, int max_iterations = 100,
                    int restarts = 4);

double normalized_mutual_information(const std::vector<int>& a, const std::vector<int>& b);
double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b);

struct ClusteringQuality {
  double nmi = 0.0;
  double ari = 0.0;
};

// k-means on L2-normalized embeddings scored against the labels.
ClusteringQuality clustering_quality(const EmbeddingBatch& embeddings, const std::vector<int>& labels,
                                     int num_clusters, std::uint64_t seed = 0);

// Multinomial logistic regression trained by per-sample SGD on frozen
// embeddings; returns top-1 accuracy on the test split.
double linear_probe(const EmbeddingBatch& train_emb, const std::vector<int>& train_labels,
                    const EmbeddingBatch& test_emb, const std::vector<int>& test_labels, int epochs,
                    double lr, std::uint64_t seed = 0);

struct DiagnosticsReport {
  double class_divergence = 0.0;
  double pr_omega_given_a = 0.0;
  std::optional<double> pr_omega_given_b;
  double nmi = 0.0;
  double ari = 0.0;
  double probe_accuracy = 0.0;
  FrequencyCounts counts;
};

}  // namespace deputy

#endif  // DEPUTY_DIAGNOSTICS_HPP_
