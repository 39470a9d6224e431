#include "deputy/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <string>

#include "deputy/errors.hpp"

namespace deputy {

namespace {

constexpr double kSpreadFloor = 1e-12;

void require_label_count(Eigen::Index rows, const std::vector<int>& labels) {
  if (static_cast<std::size_t>(rows) != labels.size()) {
    throw Error(ErrorCode::kRowCountMismatch, std::to_string(rows) + " embeddings but " +
                                                  std::to_string(labels.size()) + " labels");
  }
}

double choose2(double n) { return 0.5 * n * (n - 1.0); }

// Contingency table between two labelings of equal length.
struct Contingency {
  std::map<std::pair<int, int>, long> joint;
  std::map<int, long> rows;
  std::map<int, long> cols;
  long n = 0;
};

Contingency contingency(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::kRowCountMismatch, "labelings differ in length");
  }
  if (a.empty()) throw Error(ErrorCode::kDegenerateInput, "empty labelings");
  Contingency t;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ++t.joint[{a[i], b[i]}];
    ++t.rows[a[i]];
    ++t.cols[b[i]];
  }
  t.n = static_cast<long>(a.size());
  return t;
}

double entropy(const std::map<int, long>& counts, long n) {
  double h = 0.0;
  for (const auto& [_, c] : counts) {
    const double q = static_cast<double>(c) / static_cast<double>(n);
    h -= q * std::log(q);
  }
  return h;
}

double squared_distance(const Matrix& points, Eigen::Index i, const Matrix& centers, Eigen::Index c) {
  return (points.row(i) - centers.row(c)).squaredNorm();
}

KMeansResult kmeans_once(const Matrix& points, int num_clusters, std::mt19937_64& rng,
                         int max_iterations) {
  const Eigen::Index n = points.rows();
  Matrix centers(num_clusters, points.cols());
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  centers.row(0) = points.row(first(rng));
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int c = 1; c < num_clusters; ++c) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], squared_distance(points, i, centers, c - 1));
      total += nearest[i];
    }
    Eigen::Index chosen = n - 1;
    if (total > 0.0) {
      double target = unit(rng) * total;
      for (Eigen::Index i = 0; i < n; ++i) {
        target -= nearest[i];
        if (target < 0.0) {
          chosen = i;
          break;
        }
      }
    } else {
      chosen = first(rng);
    }
    centers.row(c) = points.row(chosen);
  }

  KMeansResult result;
  result.assignment.assign(n, -1);
  for (int iter = 0; iter < max_iterations; ++iter) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d = squared_distance(points, i, centers, 0);
      for (int c = 1; c < num_clusters; ++c) {
        const double d = squared_distance(points, i, centers, c);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (result.assignment[i] != best) {
        result.assignment[i] = best;
        changed = true;
      }
    }
    if (!changed && iter > 0) break;
    Matrix sums = Matrix::Zero(num_clusters, points.cols());
    std::vector<long> counts(num_clusters, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(result.assignment[i]) += points.row(i);
      ++counts[result.assignment[i]];
    }
    for (int c = 0; c < num_clusters; ++c) {
      if (counts[c] > 0) {
        centers.row(c) = sums.row(c) / static_cast<double>(counts[c]);
        continue;
      }
      // Empty cluster: move it onto the point farthest from its current center.
      Eigen::Index far = 0;
      double far_d = -1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double d = squared_distance(points, i, centers, result.assignment[i]);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      centers.row(c) = points.row(far);
    }
  }
  result.inertia = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    result.inertia += squared_distance(points, i, centers, result.assignment[i]);
  }
  return result;
}

}  // namespace

double class_divergence(const EmbeddingBatch& embeddings, const std::vector<int>& labels) {
  require_label_count(embeddings.rows(), labels);
  const int max_label = *std::max_element(labels.begin(), labels.end());
  if (*std::min_element(labels.begin(), labels.end()) < 0) {
    throw Error(ErrorCode::kInvalidSpec, "labels must be nonnegative");
  }
  const int num_classes = max_label + 1;
  std::vector<long> counts(num_classes, 0);
  for (int label : labels) ++counts[label];
  const long present = std::count_if(counts.begin(), counts.end(), [](long c) { return c > 0; });
  if (present < 2) throw Error(ErrorCode::kSingleClass, "class divergence needs at least 2 classes");
  for (int c = 0; c < num_classes; ++c) {
    if (counts[c] == 0) throw Error(ErrorCode::kEmptyClass, "class " + std::to_string(c) + " has no samples");
  }

  const Matrix& x = embeddings.matrix();
  Matrix centers = Matrix::Zero(num_classes, x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) centers.row(labels[i]) += x.row(i);
  for (int c = 0; c < num_classes; ++c) centers.row(c) /= static_cast<double>(counts[c]);

  double within = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) within += (x.row(i) - centers.row(labels[i])).squaredNorm();
  const double pooled_sd =
      std::max(std::sqrt(within / static_cast<double>(x.rows() * x.cols())), kSpreadFloor);

  double total = 0.0;
  long pairs = 0;
  for (int a = 0; a < num_classes; ++a) {
    for (int b = a + 1; b < num_classes; ++b) {
      total += (centers.row(a) - centers.row(b)).norm() / pooled_sd;
      ++pairs;
    }
  }
  return total / static_cast<double>(pairs);
}

AnchorObservation observe_anchor(std::size_t anchor_position, const std::vector<double>& distances,
                                 const std::vector<std::size_t>& owners) {
  if (distances.size() != owners.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "one owner per negative distance required");
  }
  AnchorObservation obs;
  obs.anchor_position = anchor_position;
  for (std::size_t slot : sorted_ascending_with_ties(distances)) obs.negatives_sorted.push_back(owners[slot]);
  return obs;
}

bool FalseNegativeCounter::add(const BatchObservation& batch) {
  bool has_pair = false;
  {
    std::vector<int> sorted = batch.labels;
    std::sort(sorted.begin(), sorted.end());
    has_pair = std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end();
  }
  bool omega = false;
  for (const AnchorObservation& anchor : batch.anchors) {
    const int anchor_label = batch.labels.at(anchor.anchor_position);
    for (std::size_t rank : deputy_ranks(anchor.negatives_sorted.size(), k_, variant_)) {
      if (batch.labels.at(anchor.negatives_sorted[rank - 1]) == anchor_label) {
        omega = true;
        break;
      }
    }
    if (omega) break;
  }
  ++counts_.batches_total;
  if (has_pair) ++counts_.batches_b;
  if (omega) ++counts_.batches_omega;
  if (omega && has_pair) ++counts_.batches_omega_and_b;
  return omega;
}

void FalseNegativeCounter::merge(const FalseNegativeCounter& other) {
  counts_.batches_total += other.counts_.batches_total;
  counts_.batches_b += other.counts_.batches_b;
  counts_.batches_omega += other.counts_.batches_omega;
  counts_.batches_omega_and_b += other.counts_.batches_omega_and_b;
}

FalseNegativeFrequencies FalseNegativeCounter::result() const {
  if (counts_.batches_total == 0) throw Error(ErrorCode::kNoBatches, "no batches observed");
  FalseNegativeFrequencies out;
  out.counts = counts_;
  out.pr_omega_given_a =
      static_cast<double>(counts_.batches_omega) / static_cast<double>(counts_.batches_total);
  if (counts_.batches_b > 0) {
    out.pr_omega_given_b =
        static_cast<double>(counts_.batches_omega_and_b) / static_cast<double>(counts_.batches_b);
  }
  return out;
}

FalseNegativeFrequencies false_negative_frequencies(const std::vector<BatchObservation>& batches,
                                                    int k, LossVariant variant) {
  FalseNegativeCounter counter(k, variant);
  for (const BatchObservation& batch : batches) counter.add(batch);
  return counter.result();
}

KMeansResult kmeans(const Matrix& points, int num_clusters, std::uint64_t seed, int max_iterations,
                    int restarts) {
  if (num_clusters < 1 || points.rows() < num_clusters) {
    throw Error(ErrorCode::kInvalidSpec, "need at least as many points as clusters");
  }
  std::mt19937_64 rng(seed);
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < std::max(1, restarts); ++r) {
    KMeansResult candidate = kmeans_once(points, num_clusters, rng, max_iterations);
    if (candidate.inertia < best.inertia) best = std::move(candidate);
  }
  return best;
}

double normalized_mutual_information(const std::vector<int>& a, const std::vector<int>& b) {
  const Contingency t = contingency(a, b);
  const double ha = entropy(t.rows, t.n);
  const double hb = entropy(t.cols, t.n);
  if (ha == 0.0 && hb == 0.0) return 1.0;
  double mi = 0.0;
  const double n = static_cast<double>(t.n);
  for (const auto& [key, c] : t.joint) {
    const double pij = static_cast<double>(c) / n;
    const double pi = static_cast<double>(t.rows.at(key.first)) / n;
    const double pj = static_cast<double>(t.cols.at(key.second)) / n;
    mi += pij * std::log(pij / (pi * pj));
  }
  const double denom = 0.5 * (ha + hb);
  return std::clamp(mi / denom, 0.0, 1.0);
}

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  const Contingency t = contingency(a, b);
  double index = 0.0;
  for (const auto& [_, c] : t.joint) index += choose2(static_cast<double>(c));
  double sum_a = 0.0;
  for (const auto& [_, c] : t.rows) sum_a += choose2(static_cast<double>(c));
  double sum_b = 0.0;
  for (const auto& [_, c] : t.cols) sum_b += choose2(static_cast<double>(c));
  const double total = choose2(static_cast<double>(t.n));
  const double expected = total > 0.0 ? sum_a * sum_b / total : 0.0;
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

ClusteringQuality clustering_quality(const EmbeddingBatch& embeddings, const std::vector<int>& labels,
                                     int num_clusters, std::uint64_t seed) {
  require_label_count(embeddings.rows(), labels);
  if (num_clusters < 2 || embeddings.rows() < num_clusters) {
    throw Error(ErrorCode::kInvalidSpec, "need num_clusters >= 2 and at least that many points");
  }
  const Matrix& x = embeddings.matrix();
  bool all_same = true;
  for (Eigen::Index i = 1; i < x.rows() && all_same; ++i) all_same = (x.row(i) == x.row(0));
  if (all_same) throw Error(ErrorCode::kDegenerateInput, "all embeddings are identical");

  Matrix unit(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) unit.row(i) = l2_normalize(x.row(i).transpose()).transpose();
  const KMeansResult clusters = kmeans(unit, num_clusters, seed);
  return {normalized_mutual_information(clusters.assignment, labels),
          adjusted_rand_index(clusters.assignment, labels)};
}

double linear_probe(const EmbeddingBatch& train_emb, const std::vector<int>& train_labels,
                    const EmbeddingBatch& test_emb, const std::vector<int>& test_labels, int epochs,
                    double lr, std::uint64_t seed) {
  if (train_labels.empty() || test_labels.empty()) {
    throw Error(ErrorCode::kEmptySplit, "probe needs nonempty train and test splits");
  }
  require_label_count(train_emb.rows(), train_labels);
  require_label_count(test_emb.rows(), test_labels);
  if (train_emb.dim() != test_emb.dim()) {
    throw Error(ErrorCode::kDimensionMismatch, "train and test embeddings differ in dimension");
  }
  int num_classes = 0;
  for (int y : train_labels) num_classes = std::max(num_classes, y + 1);
  for (int y : test_labels) num_classes = std::max(num_classes, y + 1);

  const Eigen::Index d = train_emb.dim();
  const Matrix& x = train_emb.matrix();
  Matrix w = Matrix::Zero(num_classes, d);
  Vector bias = Vector::Zero(num_classes);
  std::vector<std::size_t> order(train_labels.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  Vector logits(num_classes);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i : order) {
      const auto row = static_cast<Eigen::Index>(i);
      logits = w * x.row(row).transpose() + bias;
      const double top = logits.maxCoeff();
      Vector probs = (logits.array() - top).exp().matrix();
      probs /= probs.sum();
      probs(train_labels[i]) -= 1.0;
      w.noalias() -= lr * probs * x.row(row);
      bias -= lr * probs;
    }
  }

  const Matrix& xt = test_emb.matrix();
  long correct = 0;
  for (Eigen::Index i = 0; i < xt.rows(); ++i) {
    logits = w * xt.row(i).transpose() + bias;
    Eigen::Index best = 0;
    logits.maxCoeff(&best);
    if (static_cast<int>(best) == test_labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(xt.rows());
}

}  // namespace deputy
