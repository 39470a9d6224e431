#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include <Eigen/QR>

#include "deputy/data.hpp"
#include "deputy/diagnostics.hpp"
#include "deputy/errors.hpp"
#include "oracles.hpp"

using namespace deputy;

namespace {

template <class F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::kIoError;
}

// Pair-counting ARI straight from the definition, O(n^2).
double brute_force_ari(const std::vector<int>& a, const std::vector<int>& b) {
  double both = 0, only_a = 0, only_b = 0, pairs = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = i + 1; j < a.size(); ++j) {
      const bool sa = a[i] == a[j], sb = b[i] == b[j];
      both += sa && sb;
      only_a += sa;
      only_b += sb;
      ++pairs;
    }
  const double expected = only_a * only_b / pairs;
  return (both - expected) / (0.5 * (only_a + only_b) - expected);
}

// Observations for each anchor of a contrastive batch, from raw item distances.
BatchObservation observe(const ContrastiveBatch& cb) {
  BatchObservation obs;
  obs.labels = cb.hidden_labels;
  const Eigen::Index b = static_cast<Eigen::Index>(cb.size());
  for (std::size_t i = 0; i < cb.size(); ++i) {
    const Matrix negs = gather_negatives(cb.view_a, cb.view_b, i);
    std::vector<double> dist;
    std::vector<std::size_t> owners;
    for (Eigen::Index s = 0; s < negs.rows(); ++s) {
      dist.push_back(cosine_distance(cb.view_a.row(static_cast<Eigen::Index>(i)).transpose(),
                                     negs.row(s).transpose()));
      owners.push_back(cb.negative_owner(i, static_cast<std::size_t>(s)));
    }
    (void)b;
    obs.anchors.push_back(observe_anchor(i, dist, owners));
  }
  return obs;
}

}  // namespace

TEST_CASE("class_divergence examples") {
  Matrix two(4, 2);
  two << 0, 1, 0, -1, 4, 1, 4, -1;
  // Pooled sd = sqrt(4 / 8); centers 4 apart.
  CHECK(class_divergence(EmbeddingBatch(two), {0, 0, 1, 1}) ==
        doctest::Approx(4.0 * std::sqrt(2.0)).epsilon(1e-14));

  Matrix same = Matrix::Constant(4, 3, 0.7);
  CHECK(class_divergence(EmbeddingBatch(same), {0, 1, 0, 1}) == 0.0);

  // Equilateral centers of side 3 with unit pooled spread.
  Matrix tri(6, 2);
  const double h = 3.0 * std::sqrt(3.0) / 2.0;
  tri << 1, 0, -1, 0, 4, 0, 2, 0, 2.5, h, 0.5, h;
  // Within-class residuals are +-1 along one axis; sd = sqrt(6 / 12).
  CHECK(class_divergence(EmbeddingBatch(tri), {0, 0, 1, 1, 2, 2}) ==
        doctest::Approx(3.0 / std::sqrt(0.5)).epsilon(1e-12));
}

TEST_CASE("class_divergence errors") {
  Matrix x = Matrix::Random(4, 2);
  CHECK(code_of([&] { class_divergence(EmbeddingBatch(x), {1, 1, 1, 1}); }) == ErrorCode::kSingleClass);
  CHECK(code_of([&] { class_divergence(EmbeddingBatch(x), {0, 2, 0, 2}); }) == ErrorCode::kEmptyClass);
  CHECK(code_of([&] { class_divergence(EmbeddingBatch(x), {0, 1, 0}); }) ==
        ErrorCode::kRowCountMismatch);
}

TEST_CASE("class_divergence is invariant to rotation and positive scaling") {
  std::mt19937_64 rng(51);
  std::uniform_real_distribution<double> scale(0.01, 100.0);
  for (int t = 0; t < 50; ++t) {
    const int d = 2 + t % 6;
    const Matrix x = oracle::random_matrix(rng, 30, d);
    std::vector<int> labels(30);
    for (int i = 0; i < 30; ++i) labels[i] = i % 3;
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(Eigen::MatrixXd(oracle::random_matrix(rng, d, d)));
    const Matrix rot = Matrix(qr.householderQ()) * scale(rng);
    const double base = class_divergence(EmbeddingBatch(x), labels);
    CHECK(class_divergence(EmbeddingBatch(x * rot), labels) == doctest::Approx(base).epsilon(1e-10));
  }
}

TEST_CASE("false_negative_frequencies examples") {
  // Distinct classes: A only.
  BatchObservation distinct{{0, 1, 2}, {observe_anchor(0, {0.1, 0.2}, {1, 2})}};
  auto r = false_negative_frequencies({distinct}, 1, LossVariant::kRankK);
  CHECK(r.pr_omega_given_a == 0.0);
  CHECK_FALSE(r.pr_omega_given_b.has_value());
  CHECK(r.counts.batches_total == 1);

  // One class throughout: every deputy is a false negative.
  BatchObservation uniform{{4, 4, 4}, {observe_anchor(1, {0.5, -0.5}, {0, 2})}};
  r = false_negative_frequencies({uniform}, 1, LossVariant::kRankK);
  CHECK(r.pr_omega_given_a == 1.0);
  CHECK(r.pr_omega_given_b == 1.0);

  // Items 0 and 1 share a class and sit at rank 1 of each other's lists.
  BatchObservation planted;
  planted.labels = {0, 0, 1, 2};
  planted.anchors.push_back(observe_anchor(0, {-0.9, 0.1, 0.4}, {1, 2, 3}));
  planted.anchors.push_back(observe_anchor(1, {0.3, -0.8, 0.2}, {2, 0, 3}));
  planted.anchors.push_back(observe_anchor(2, {0.1, 0.2, 0.3}, {0, 1, 3}));
  planted.anchors.push_back(observe_anchor(3, {0.1, 0.2, 0.3}, {0, 1, 2}));
  r = false_negative_frequencies({planted}, 2, LossVariant::kRankK);
  CHECK(r.counts.batches_omega == 0);
  CHECK(r.counts.batches_b == 1);
  CHECK(r.pr_omega_given_b == 0.0);
  r = false_negative_frequencies({planted}, 1, LossVariant::kRankK);
  CHECK(r.counts.batches_omega == 1);
  // The smoothed deputy for k=1 covers ranks 2..3 and so misses the planted pair.
  CHECK(false_negative_frequencies({planted}, 1, LossVariant::kSmoothedRankK).counts.batches_omega == 0);

  CHECK(code_of([] { false_negative_frequencies({}, 1, LossVariant::kRankK); }) == ErrorCode::kNoBatches);
}

TEST_CASE("observe_anchor orders owners by ascending distance") {
  const AnchorObservation a = observe_anchor(3, {0.5, -0.2, 0.5, 0.0}, {7, 8, 9, 10});
  CHECK(a.negatives_sorted == std::vector<std::size_t>{8, 10, 7, 9});
  CHECK(code_of([] { observe_anchor(0, {0.1}, {1, 2}); }) == ErrorCode::kDimensionMismatch);
}

TEST_CASE("counter merge matches a single pass") {
  SyntheticDatasetSpec spec;
  spec.num_classes = 4;
  spec.samples_per_class = 10;
  spec.ambient_dim = 5;
  const Dataset d = generate_blobs(spec);
  RngState rng(52);
  FalseNegativeCounter all(3, LossVariant::kRankK), left(3, LossVariant::kRankK),
      right(3, LossVariant::kRankK);
  for (int t = 0; t < 200; ++t) {
    const BatchObservation obs = observe(sample_contrastive_batch(d, 5, AugmentationSpec{0.2}, rng));
    all.add(obs);
    (t % 3 ? left : right).add(obs);
  }
  left.merge(right);
  CHECK(left.counts().batches_total == all.counts().batches_total);
  CHECK(left.counts().batches_b == all.counts().batches_b);
  CHECK(left.counts().batches_omega == all.counts().batches_omega);
  CHECK(left.counts().batches_omega_and_b == all.counts().batches_omega_and_b);
}

TEST_CASE("Pr(omega | B) is at least Pr(omega | A) and omega implies B") {
  std::mt19937_64 seeds(53);
  for (int trial = 0; trial < 20; ++trial) {
    SyntheticDatasetSpec spec;
    spec.num_classes = 2 + trial % 6;
    spec.samples_per_class = 12;
    spec.ambient_dim = 4;
    spec.noise_sigma = 0.3 + 0.1 * (trial % 4);
    spec.seed = seeds();
    const Dataset d = generate_blobs(spec);
    RngState rng(seeds());
    const int k = 1 + trial % 4;
    FalseNegativeCounter c(k, trial % 2 ? LossVariant::kRankK : LossVariant::kSmoothedRankK);
    for (int t = 0; t < 100; ++t) c.add(observe(sample_contrastive_batch(d, 4, AugmentationSpec{0.1}, rng)));
    const auto r = c.result();
    CHECK(r.counts.batches_omega == r.counts.batches_omega_and_b);
    CHECK(r.counts.batches_omega <= r.counts.batches_total);
    if (r.pr_omega_given_b) CHECK(*r.pr_omega_given_b >= r.pr_omega_given_a);
  }
}

TEST_CASE("omega frequency with k = m/2 does not exceed k = 1") {
  SyntheticDatasetSpec spec;
  spec.num_classes = 10;
  spec.samples_per_class = 50;
  spec.ambient_dim = 16;
  spec.noise_sigma = 0.4;
  spec.seed = 54;
  const Dataset d = generate_blobs(spec);
  RngState rng(55);
  const int b = 16, m = 2 * (b - 1);
  FalseNegativeCounter hard(1, LossVariant::kRankK), half(m / 2, LossVariant::kRankK);
  for (int t = 0; t < 1000; ++t) {
    const BatchObservation obs = observe(sample_contrastive_batch(d, b, AugmentationSpec{0.1}, rng));
    hard.add(obs);
    half.add(obs);
  }
  CHECK(half.result().pr_omega_given_a <= hard.result().pr_omega_given_a);
}

TEST_CASE("clustering scores on fixed assignments") {
  const std::vector<int> labels{0, 0, 1, 1, 2, 2};
  CHECK(normalized_mutual_information(labels, labels) == doctest::Approx(1.0));
  CHECK(adjusted_rand_index(labels, labels) == doctest::Approx(1.0));
  const std::vector<int> renamed{5, 5, 3, 3, 9, 9};
  CHECK(normalized_mutual_information(labels, renamed) == doctest::Approx(1.0));
  CHECK(adjusted_rand_index(labels, renamed) == doctest::Approx(1.0));
  const std::vector<int> one(6, 0);
  CHECK(normalized_mutual_information(labels, one) == doctest::Approx(0.0));
  CHECK(adjusted_rand_index(labels, one) == doctest::Approx(0.0));
  // Two balanced classes against an orthogonal split share no information.
  CHECK(normalized_mutual_information({0, 0, 1, 1}, {0, 1, 0, 1}) == doctest::Approx(0.0));
}

TEST_CASE("adjusted_rand_index matches pair counting") {
  std::mt19937_64 rng(56);
  for (int t = 0; t < 100; ++t) {
    const int n = 10 + t, ka = 2 + t % 5, kb = 2 + (t / 5) % 5;
    std::vector<int> a(n), b(n);
    for (int i = 0; i < n; ++i) {
      a[i] = static_cast<int>(rng() % ka);
      b[i] = t % 2 ? static_cast<int>(rng() % kb) : (a[i] + (rng() % 4 == 0)) % kb;
    }
    CHECK(adjusted_rand_index(a, b) == doctest::Approx(brute_force_ari(a, b)).epsilon(1e-10));
    CHECK(adjusted_rand_index(a, b) == doctest::Approx(adjusted_rand_index(b, a)).epsilon(1e-12));
    const double nmi = normalized_mutual_information(a, b);
    CHECK(nmi >= 0.0);
    CHECK(nmi <= 1.0);
  }
}

TEST_CASE("random assignments score near zero ARI") {
  const int n = 2000, classes = 5;
  std::vector<int> labels(n);
  for (int i = 0; i < n; ++i) labels[i] = i % classes;
  std::mt19937_64 rng(57);
  std::vector<double> null_scores;
  std::vector<int> perm = labels;
  for (int t = 0; t < 200; ++t) {
    std::shuffle(perm.begin(), perm.end(), rng);
    null_scores.push_back(adjusted_rand_index(labels, perm));
  }
  const double mean = std::accumulate(null_scores.begin(), null_scores.end(), 0.0) / 200;
  double var = 0.0;
  for (double s : null_scores) var += (s - mean) * (s - mean);
  const double sd = std::sqrt(var / 199);
  CHECK(std::abs(mean) <= 3 * sd / std::sqrt(200.0));
  std::vector<int> fresh(n);
  for (int& f : fresh) f = static_cast<int>(rng() % classes);
  CHECK(std::abs(adjusted_rand_index(labels, fresh)) <= 3 * sd);
}

TEST_CASE("clustering_quality recovers separated clusters and is deterministic") {
  SyntheticDatasetSpec spec;
  spec.num_classes = 4;
  spec.samples_per_class = 30;
  spec.ambient_dim = 8;
  spec.noise_sigma = 0.05;
  spec.seed = 58;
  const Dataset d = generate_blobs(spec);
  const EmbeddingBatch emb(d.items);
  const ClusteringQuality q = clustering_quality(emb, d.labels, 4, 1);
  CHECK(q.ari == doctest::Approx(1.0));
  CHECK(q.nmi == doctest::Approx(1.0));

  spec.noise_sigma = 0.6;
  const Dataset noisy = generate_blobs(spec);
  const ClusteringQuality a = clustering_quality(EmbeddingBatch(noisy.items), noisy.labels, 4, 9);
  const ClusteringQuality b = clustering_quality(EmbeddingBatch(noisy.items), noisy.labels, 4, 9);
  CHECK(a.ari == b.ari);
  CHECK(a.nmi == b.nmi);

  CHECK(code_of([] { clustering_quality(EmbeddingBatch(Matrix::Constant(6, 2, 1.0)), {0, 0, 0, 1, 1, 1}, 2); }) ==
        ErrorCode::kDegenerateInput);
}

TEST_CASE("kmeans assigns every point and its inertia matches the assignment") {
  std::mt19937_64 rng(59);
  const Matrix x = oracle::random_matrix(rng, 40, 3);
  const KMeansResult r = kmeans(x, 4, 7);
  REQUIRE(r.assignment.size() == 40);
  Matrix centers = Matrix::Zero(4, 3);
  std::vector<int> counts(4, 0);
  for (int i = 0; i < 40; ++i) {
    REQUIRE(r.assignment[i] >= 0);
    REQUIRE(r.assignment[i] < 4);
    centers.row(r.assignment[i]) += x.row(i);
    ++counts[r.assignment[i]];
  }
  double inertia = 0.0;
  for (int c = 0; c < 4; ++c)
    if (counts[c]) centers.row(c) /= counts[c];
  for (int i = 0; i < 40; ++i) inertia += (x.row(i) - centers.row(r.assignment[i])).squaredNorm();
  CHECK(r.inertia == doctest::Approx(inertia).epsilon(1e-9));
}

TEST_CASE("linear_probe examples") {
  std::mt19937_64 rng(60);
  std::normal_distribution<double> n(0.0, 0.2);
  auto make = [&](int count, std::vector<int>& labels) {
    Matrix x(count, 2);
    labels.resize(count);
    for (int i = 0; i < count; ++i) {
      labels[i] = i % 2;
      x.row(i) << (labels[i] ? 2.0 : -2.0) + n(rng), n(rng);
    }
    return x;
  };
  std::vector<int> ytr, yte;
  const Matrix xtr = make(80, ytr), xte = make(40, yte);
  CHECK(linear_probe(EmbeddingBatch(xtr), ytr, EmbeddingBatch(xte), yte, 20, 0.1) == 1.0);

  const int classes = 4, count = 2000;
  SyntheticDatasetSpec spec;
  spec.num_classes = classes;
  spec.samples_per_class = count / classes;
  spec.ambient_dim = 4;
  spec.seed = 61;
  const Dataset d = generate_blobs(spec);
  std::vector<int> shuffled(d.labels);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  const auto [tr, te] = split_indices(count, 0.5, 3);
  Matrix a(tr.size(), 4), b(te.size(), 4);
  std::vector<int> la, lb;
  for (std::size_t i = 0; i < tr.size(); ++i) {
    a.row(i) = d.items.row(tr[i]);
    la.push_back(shuffled[tr[i]]);
  }
  for (std::size_t i = 0; i < te.size(); ++i) {
    b.row(i) = d.items.row(te[i]);
    lb.push_back(shuffled[te[i]]);
  }
  const double acc = linear_probe(EmbeddingBatch(a), la, EmbeddingBatch(b), lb, 10, 0.05);
  const double se = std::sqrt(0.25 * 0.75 / static_cast<double>(te.size()));
  CHECK(std::abs(acc - 0.25) <= 3 * se);

  spec.noise_sigma = 0.9;
  spec.samples_per_class = 60;
  const Dataset hard = generate_blobs(spec);
  const auto [htr, hte] = split_indices(hard.items.rows(), 0.5, 4);
  Matrix ha(htr.size(), 4), hb(hte.size(), 4);
  std::vector<int> hla, hlb;
  for (std::size_t i = 0; i < htr.size(); ++i) {
    ha.row(i) = hard.items.row(htr[i]);
    hla.push_back(hard.labels[htr[i]]);
  }
  for (std::size_t i = 0; i < hte.size(); ++i) {
    hb.row(i) = hard.items.row(hte[i]);
    hlb.push_back(hard.labels[hte[i]]);
  }
  const double train_acc = linear_probe(EmbeddingBatch(ha), hla, EmbeddingBatch(ha), hla, 20, 0.1);
  const double held_out = linear_probe(EmbeddingBatch(ha), hla, EmbeddingBatch(hb), hlb, 20, 0.1);
  CHECK(train_acc >= held_out);
}

TEST_CASE("linear_probe errors") {
  const EmbeddingBatch a(Matrix::Random(4, 2));
  const EmbeddingBatch b(Matrix::Random(3, 3));
  CHECK(code_of([&] { linear_probe(a, {0, 1, 0, 1}, b, {0, 1, 0}, 2, 0.1); }) ==
        ErrorCode::kDimensionMismatch);
  CHECK(code_of([&] { linear_probe(a, {}, a, {0, 1, 0, 1}, 2, 0.1); }) == ErrorCode::kEmptySplit);
}
