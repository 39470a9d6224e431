#include "deputy/harness.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "deputy/bernoulli.hpp"
#include "deputy/data.hpp"
#include "deputy/encoder.hpp"
#include "deputy/errors.hpp"
#include "deputy/text.hpp"

namespace deputy {

namespace {

using Json = nlohmann::ordered_json;

enum Stream : std::uint64_t {
  kDataStream = 1,
  kSplitStream = 2,
  kInitStream = 3,
  kShuffleStream = 4,
  kAugmentStream = 5,
  kClusterStream = 6,
  kProbeStream = 7,
  kUntrainedPassStream = 8,
};

struct BatchOutcome {
  double loss = 0.0;
  Matrix grad_online;  // rows 0..b-1 view a, b..2b-1 view b
};

std::vector<double> negative_distances(const Vector& anchor, const Matrix& negatives) {
  const Vector a = l2_normalize(anchor);
  std::vector<double> out(negatives.rows());
  for (Eigen::Index s = 0; s < negatives.rows(); ++s) {
    out[s] = -a.dot(l2_normalize(negatives.row(s).transpose()));
  }
  return out;
}

// Symmetric batch loss. Anchors always come from the online network;
// positives and negatives come from `keys` (the target network's outputs,
// or the online outputs again when keys_trainable).
BatchOutcome batch_step(const ContrastiveBatch& batch, const Matrix& online, const Matrix& keys,
                        bool keys_trainable, const LossConfig& cfg, FalseNegativeCounter& counter) {
  const auto b = static_cast<Eigen::Index>(batch.size());
  const Matrix online_a = online.topRows(b);
  const Matrix online_b = online.bottomRows(b);
  const Matrix keys_a = keys.topRows(b);
  const Matrix keys_b = keys.bottomRows(b);
  const int directions = cfg.symmetric ? 2 : 1;
  const double scale = 1.0 / static_cast<double>(directions * b);

  BatchOutcome out;
  out.grad_online = Matrix::Zero(online.rows(), online.cols());
  BatchObservation obs;
  obs.labels = batch.hidden_labels;
  std::vector<std::size_t> owners(batch.num_negatives());

  for (int dir = 0; dir < directions; ++dir) {
    for (Eigen::Index i = 0; i < b; ++i) {
      const auto pos = static_cast<std::size_t>(i);
      ContrastiveView view;
      view.anchor = (dir == 0 ? online_a : online_b).row(i).transpose();
      view.positive = (dir == 0 ? keys_b : keys_a).row(i).transpose();
      view.negatives = gather_negatives(keys_a, keys_b, pos);
      const LossResult r = directional_loss(view, cfg);
      out.loss += scale * r.value;

      const Eigen::Index anchor_row = dir == 0 ? i : b + i;
      const Eigen::Index positive_row = dir == 0 ? b + i : i;
      out.grad_online.row(anchor_row) += scale * r.grad_anchor.transpose();
      for (std::size_t s = 0; s < owners.size(); ++s) owners[s] = batch.negative_owner(pos, s);
      if (keys_trainable) {
        out.grad_online.row(positive_row) += scale * r.grad_positive.transpose();
        for (std::size_t s = 0; s < owners.size(); ++s) {
          const auto owner = static_cast<Eigen::Index>(owners[s]);
          const Eigen::Index row = (s % 2 == 0) ? owner : b + owner;
          out.grad_online.row(row) += scale * r.grad_negatives.row(static_cast<Eigen::Index>(s));
        }
      }
      obs.anchors.push_back(observe_anchor(pos, negative_distances(view.anchor, view.negatives), owners));
    }
  }
  counter.add(obs);
  return out;
}

Matrix stack_views(const ContrastiveBatch& batch) {
  Matrix stacked(2 * batch.view_a.rows(), batch.view_a.cols());
  stacked << batch.view_a, batch.view_b;
  return stacked;
}

Matrix normalized_rows(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) out.row(i) = l2_normalize(x.row(i).transpose()).transpose();
  return out;
}

Matrix select_rows(const Matrix& x, const std::vector<std::size_t>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(rows[i]);
  return out;
}

std::vector<int> select_labels(const std::vector<int>& labels, const std::vector<std::size_t>& rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(labels[r]);
  return out;
}

// Diagnostics on the clean (unaugmented) items. Omega fields are filled by
// the caller from the training-batch counts.
DiagnosticsReport evaluate_encoder(const EncoderParams& online, const Dataset& data,
                                   const std::vector<std::size_t>& train_idx,
                                   const std::vector<std::size_t>& test_idx,
                                   const ExperimentConfig& cfg) {
  const Matrix emb = normalized_rows(embed(online, data.items));
  const EmbeddingBatch train_emb(select_rows(emb, train_idx));
  const EmbeddingBatch test_emb(select_rows(emb, test_idx));
  const std::vector<int> train_labels = select_labels(data.labels, train_idx);
  const std::vector<int> test_labels = select_labels(data.labels, test_idx);

  DiagnosticsReport report;
  report.class_divergence = class_divergence(test_emb, test_labels);
  const ClusteringQuality cq =
      clustering_quality(test_emb, test_labels, data.num_classes, derive_seed(cfg.seed, kClusterStream));
  report.nmi = cq.nmi;
  report.ari = cq.ari;
  report.probe_accuracy = linear_probe(train_emb, train_labels, test_emb, test_labels, cfg.probe_epochs,
                                       cfg.probe_lr, derive_seed(cfg.seed, kProbeStream));
  return report;
}

Json optional_number(const std::optional<double>& x) {
  return x ? Json(*x) : Json(nullptr);
}

Json report_json(const DiagnosticsReport& r) {
  Json j;
  j["class_divergence"] = r.class_divergence;
  j["pr_omega_given_a"] = r.pr_omega_given_a;
  j["pr_omega_given_b"] = optional_number(r.pr_omega_given_b);
  j["nmi"] = r.nmi;
  j["ari"] = r.ari;
  j["probe_accuracy"] = r.probe_accuracy;
  j["batches_total"] = r.counts.batches_total;
  j["batches_b"] = r.counts.batches_b;
  j["batches_omega"] = r.counts.batches_omega;
  return j;
}

std::string optional_text(const std::optional<double>& x) {
  return x ? format_real(*x) : std::string("NA");
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error(ErrorCode::kIoError, "write failed for " + path.string());
}

void fill_omega(DiagnosticsReport& report, const EpochMetrics& epoch) {
  report.pr_omega_given_a = epoch.pr_omega_given_a;
  report.pr_omega_given_b = epoch.pr_omega_given_b;
  report.counts = epoch.counts;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over the combined value.
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

RunResult run_experiment(const ExperimentConfig& cfg, bool write_files) {
  cfg.validate();
  const LossConfig loss_cfg = cfg.resolved_loss();

  SyntheticDatasetSpec data_spec = cfg.dataset;
  data_spec.seed = derive_seed(cfg.seed, kDataStream);
  const Dataset data = generate_blobs(data_spec);
  const auto [train_idx, test_idx] =
      split_indices(static_cast<std::size_t>(data.items.rows()), cfg.train_fraction,
                    derive_seed(cfg.seed, kSplitStream));

  EncoderParams online = init_encoder(cfg.dataset.ambient_dim, cfg.encoder.hidden, cfg.encoder.output_dim,
                                      cfg.encoder.activation, derive_seed(cfg.seed, kInitStream));
  TargetNetwork target{online, cfg.target_momentum};

  const auto b = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t batches_per_epoch = train_idx.size() / b;
  const long total_steps = std::max<long>(1, static_cast<long>(cfg.epochs) * static_cast<long>(batches_per_epoch));
  OptimizerState opt = make_optimizer(online, cfg.optimizer.base_lr, cfg.optimizer.momentum_coeff,
                                      cfg.optimizer.weight_decay, total_steps);

  RngState shuffle_rng(derive_seed(cfg.seed, kShuffleStream));
  RngState augment_rng(derive_seed(cfg.seed, kAugmentStream));
  RngState untrained_rng(derive_seed(cfg.seed, kUntrainedPassStream));

  RunResult result;
  result.config_hash = config_hash(cfg);

  auto run_epoch = [&](int epoch, bool update, RngState& order_rng, RngState& aug_rng) {
    std::vector<std::size_t> order = train_idx;
    std::shuffle(order.begin(), order.end(), order_rng.engine);
    FalseNegativeCounter counter(loss_cfg.k, loss_cfg.variant);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start + b <= order.size(); start += b) {
      std::vector<std::size_t> items(order.begin() + static_cast<long>(start),
                                     order.begin() + static_cast<long>(start + b));
      const ContrastiveBatch batch = make_contrastive_batch(data, std::move(items), cfg.augmentation, aug_rng);
      const Matrix inputs = stack_views(batch);
      const ForwardResult fwd = forward(online, inputs);
      const bool keys_trainable = !cfg.use_target;
      const Matrix keys = keys_trainable ? fwd.embeddings : embed(target.params, inputs);
      const BatchOutcome step = batch_step(batch, fwd.embeddings, keys, keys_trainable, loss_cfg, counter);
      loss_sum += step.loss;
      if (update) {
        const EncoderParams grads = backward(online, fwd.cache, step.grad_online);
        sgd_momentum_step(online, grads, opt);
        if (cfg.use_target) target = ema_update(target, online);
      }
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.mean_loss = loss_sum / static_cast<double>(batches_per_epoch);
    m.learning_rate = cosine_lr(std::min(opt.step, opt.total_steps), opt.total_steps, opt.base_lr);
    const FalseNegativeFrequencies freq = counter.result();
    m.pr_omega_given_a = freq.pr_omega_given_a;
    m.pr_omega_given_b = freq.pr_omega_given_b;
    m.counts = freq.counts;
    result.per_epoch.push_back(m);
  };

  run_epoch(0, false, untrained_rng, untrained_rng);
  result.initial = evaluate_encoder(online, data, train_idx, test_idx, cfg);
  fill_omega(result.initial, result.per_epoch.front());
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) run_epoch(epoch, true, shuffle_rng, augment_rng);

  result.final = cfg.epochs == 0 ? result.initial : evaluate_encoder(online, data, train_idx, test_idx, cfg);
  fill_omega(result.final, result.per_epoch.back());
  result.final_loss = result.per_epoch.back().mean_loss;

  Json doc;
  doc["artifact_version"] = std::string(kArtifactVersion);
  doc["config_hash"] = result.config_hash;
  doc["seed"] = cfg.seed;
  Json config_obj = Json::object();
  for (const auto& [key, value] : config_entries(cfg)) config_obj[key] = value;
  doc["config"] = config_obj;
  doc["resolved_k"] = loss_cfg.k;
  doc["num_negatives"] = cfg.num_negatives();
  Json epochs = Json::array();
  for (const EpochMetrics& m : result.per_epoch) {
    Json e;
    e["epoch"] = m.epoch;
    e["mean_loss"] = m.mean_loss;
    e["learning_rate"] = m.learning_rate;
    e["pr_omega_given_a"] = m.pr_omega_given_a;
    e["pr_omega_given_b"] = optional_number(m.pr_omega_given_b);
    e["batches_total"] = m.counts.batches_total;
    e["batches_b"] = m.counts.batches_b;
    e["batches_omega"] = m.counts.batches_omega;
    epochs.push_back(e);
  }
  doc["per_epoch"] = epochs;
  doc["initial"] = report_json(result.initial);
  Json final_obj = report_json(result.final);
  final_obj["final_loss"] = result.final_loss;
  doc["final"] = final_obj;
  result.report_document = doc.dump(2) + "\n";

  if (write_files) {
    const std::filesystem::path dir(cfg.output_dir);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::kIoError, "cannot create " + dir.string() + ": " + ec.message());
    write_text(dir / "report.json", result.report_document);
    std::ostringstream csv;
    csv << "epoch,mean_loss,learning_rate,pr_omega_given_a,pr_omega_given_b,batches_total,batches_b,batches_omega\n";
    for (const EpochMetrics& m : result.per_epoch) {
      csv << m.epoch << ',' << format_real(m.mean_loss) << ',' << format_real(m.learning_rate) << ','
          << format_real(m.pr_omega_given_a) << ',' << optional_text(m.pr_omega_given_b) << ','
          << m.counts.batches_total << ',' << m.counts.batches_b << ',' << m.counts.batches_omega << '\n';
    }
    write_text(dir / "metrics.csv", csv.str());
    save_checkpoint((dir / "checkpoint.bin").string(), online);
    write_embeddings((dir / "embeddings.csv").string(), embed(online, data.items));
    write_labels((dir / "labels.txt").string(), data.labels);
  }
  return result;
}

GridResult compare_grid(const ExperimentConfig& base, const std::vector<GridVariant>& variants,
                        bool write_files) {
  if (variants.empty()) throw Error(ErrorCode::kInvalidConfig, "grid has no variants");
  GridResult out;
  std::ostringstream csv;
  csv << "variant,loss_variant,k,margin_c,final_loss,ari,nmi,class_divergence,pr_omega_given_a,"
         "pr_omega_given_b,probe_accuracy\n";
  for (const GridVariant& variant : variants) {
    try {
      ExperimentConfig cfg = base;
      for (const auto& [key, value] : variant.overrides) apply_setting(cfg, key, value);
      cfg.output_dir = (std::filesystem::path(base.output_dir) / variant.name).string();
      RunResult run = run_experiment(cfg, write_files);
      const LossConfig loss = cfg.resolved_loss();
      const DiagnosticsReport& r = run.final;
      csv << variant.name << ',' << loss_variant_name(loss.variant) << ',' << loss.k << ','
          << format_real(loss.margin_c) << ',' << format_real(run.final_loss) << ',' << format_real(r.ari)
          << ',' << format_real(r.nmi) << ',' << format_real(r.class_divergence) << ','
          << format_real(r.pr_omega_given_a) << ',' << optional_text(r.pr_omega_given_b) << ','
          << format_real(r.probe_accuracy) << '\n';
      out.rows.push_back({variant.name, std::move(run)});
    } catch (const Error& e) {
      throw Error(e.code(), "variant '" + variant.name + "': " + e.what());
    }
  }
  out.table_csv = csv.str();
  if (write_files) {
    std::filesystem::create_directories(base.output_dir);
    write_text(std::filesystem::path(base.output_dir) / "comparison.csv", out.table_csv);
  }
  return out;
}

std::string bernoulli_report(int m, double p, const std::vector<int>& ks, bool with_oracle) {
  Json doc;
  doc["m"] = m;
  doc["p"] = p;
  Json rows = Json::array();
  for (const RiskRow& row : risk_table(m, p, ks)) {
    Json r;
    r["k"] = row.k;
    r["probability"] = row.probability;
    if (with_oracle) r["oracle"] = binomial_tail_multiprecision({m, row.k, p}, 20);
    rows.push_back(r);
  }
  doc["rows"] = rows;
  if (m == 104 && p == 0.001) {
    Json ref;
    ref["5"] = "3.03e-94";
    ref["52"] = "6.53e-121";
    doc["published_values"] = ref;
    doc["note"] =
        "published_values are the figures quoted in the literature for m=104, p=0.001; they are not "
        "reproduced by the binomial tail itself, whose direct evaluation is the probability column";
  }
  return doc.dump(2) + "\n";
}

std::string diagnose_report(const std::string& embedding_path, const std::string& label_path,
                            const DiagnoseOptions& options) {
  const LabeledEmbeddings input = read_labeled_embeddings(embedding_path, label_path);
  const Matrix emb = normalized_rows(input.embeddings.matrix());
  const std::vector<int>& labels = input.labels;
  const auto n = static_cast<std::size_t>(emb.rows());
  if (options.batch_size < 2 || static_cast<std::size_t>(options.batch_size) > n) {
    throw Error(ErrorCode::kBatchTooSmall, "batch size must lie in [2, N]");
  }
  if (options.batches < 1) throw Error(ErrorCode::kNoBatches, "need at least one batch");
  const auto m = static_cast<std::size_t>(options.batch_size - 1);
  deputy_ranks(m, options.k, options.variant);  // validates k against m

  const int num_classes = static_cast<int>(std::set<int>(labels.begin(), labels.end()).size());
  const EmbeddingBatch all(emb);

  Json doc;
  doc["artifact_version"] = std::string(kArtifactVersion);
  doc["num_embeddings"] = n;
  doc["dim"] = emb.cols();
  doc["num_classes"] = num_classes;
  doc["class_divergence"] = class_divergence(all, labels);
  const ClusteringQuality cq = clustering_quality(all, labels, num_classes, derive_seed(options.seed, kClusterStream));
  doc["nmi"] = cq.nmi;
  doc["ari"] = cq.ari;

  const auto [train_idx, test_idx] = split_indices(n, options.train_fraction, derive_seed(options.seed, kSplitStream));
  doc["probe_accuracy"] = linear_probe(EmbeddingBatch(select_rows(emb, train_idx)), select_labels(labels, train_idx),
                                       EmbeddingBatch(select_rows(emb, test_idx)), select_labels(labels, test_idx),
                                       options.probe_epochs, options.probe_lr, derive_seed(options.seed, kProbeStream));

  FalseNegativeCounter counter(options.k, options.variant);
  std::mt19937_64 rng(derive_seed(options.seed, kShuffleStream));
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (int t = 0; t < options.batches; ++t) {
    for (std::size_t i = 0; i < static_cast<std::size_t>(options.batch_size); ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, n - 1);
      std::swap(pool[i], pool[pick(rng)]);
    }
    BatchObservation obs;
    for (int i = 0; i < options.batch_size; ++i) obs.labels.push_back(labels[pool[i]]);
    for (std::size_t i = 0; i < static_cast<std::size_t>(options.batch_size); ++i) {
      std::vector<double> dist;
      std::vector<std::size_t> owners;
      for (std::size_t j = 0; j < static_cast<std::size_t>(options.batch_size); ++j) {
        if (j == i) continue;
        dist.push_back(-emb.row(pool[i]).dot(emb.row(pool[j])));
        owners.push_back(j);
      }
      obs.anchors.push_back(observe_anchor(i, dist, owners));
    }
    counter.add(obs);
  }
  const FalseNegativeFrequencies freq = counter.result();
  doc["k"] = options.k;
  doc["variant"] = std::string(loss_variant_name(options.variant));
  doc["batch_size"] = options.batch_size;
  doc["pr_omega_given_a"] = freq.pr_omega_given_a;
  doc["pr_omega_given_b"] = optional_number(freq.pr_omega_given_b);
  doc["batches_total"] = freq.counts.batches_total;
  doc["batches_b"] = freq.counts.batches_b;
  doc["batches_omega"] = freq.counts.batches_omega;
  return doc.dump(2) + "\n";
}

}  // namespace deputy
