#include "deputy/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "deputy/errors.hpp"

namespace deputy {

namespace {

// Unit direction of v together with its norm; the norm is needed to push
// gradients back through the normalization.
struct Normalized {
  Vector unit;
  double norm = 0.0;
};

Normalized normalize(const Vector& v, const char* what) {
  const double norm = v.norm();
  if (!(norm >= 1e-30)) {
    throw Error(ErrorCode::kZeroVector, std::string(what) + " has zero norm");
  }
  return {v / norm, norm};
}

// d s / d x for s = <x/|x|, y/|y|>, with x normalized as `x`.
Vector similarity_grad(const Normalized& x, const Vector& y_unit, double s) {
  return (y_unit - s * x.unit) / x.norm;
}

void check_view(const ContrastiveView& view) {
  const Eigen::Index d = view.anchor.size();
  if (view.negatives.rows() == 0) {
    throw Error(ErrorCode::kEmptyNegatives, "view has no negatives");
  }
  if (view.positive.size() != d || view.negatives.cols() != d) {
    throw Error(ErrorCode::kDimensionMismatch, "anchor, positive and negatives disagree in dimension");
  }
}

LossResult zero_result(const ContrastiveView& view) {
  LossResult r;
  r.grad_anchor = Vector::Zero(view.anchor.size());
  r.grad_positive = Vector::Zero(view.positive.size());
  r.grad_negatives = Matrix::Zero(view.negatives.rows(), view.negatives.cols());
  return r;
}

// max(w * d(a, p) - deputy, C) where the deputy is the mean of the negative
// distances at `ranks` (1-indexed, ascending order).
LossResult triplet_core(const ContrastiveView& view, double positive_weight, int k,
                        LossVariant selection, double margin_c) {
  check_view(view);
  const Eigen::Index m = view.negatives.rows();
  const Normalized a = normalize(view.anchor, "anchor");
  const Normalized p = normalize(view.positive, "positive");
  std::vector<Normalized> negs;
  negs.reserve(m);
  std::vector<double> dist(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    negs.push_back(normalize(view.negatives.row(i).transpose(), "negative"));
    dist[i] = -a.unit.dot(negs[i].unit);
  }
  const std::vector<std::size_t> order = sorted_ascending_with_ties(dist);
  std::vector<double> sorted(m);
  for (Eigen::Index i = 0; i < m; ++i) sorted[i] = dist[order[i]];
  const DeputySelection deputy = select_deputy_distance(sorted, k, selection);

  const double s_pos = a.unit.dot(p.unit);
  const double pre_hinge = positive_weight * (-s_pos) - deputy.distance;

  LossResult r = zero_result(view);
  if (pre_hinge < margin_c) {
    r.value = margin_c;
    return r;
  }
  r.value = pre_hinge;

  // d value / d s_pos = -w ; d value / d s_neg(j) = +1/|ranks| per contributing j.
  r.grad_anchor = -positive_weight * similarity_grad(a, p.unit, s_pos);
  r.grad_positive = -positive_weight * similarity_grad(p, a.unit, s_pos);
  const double share = 1.0 / static_cast<double>(deputy.ranks.size());
  for (std::size_t rank : deputy.ranks) {
    const std::size_t j = order[rank - 1];
    const double s_neg = -dist[j];
    r.grad_anchor += share * similarity_grad(a, negs[j].unit, s_neg);
    r.grad_negatives.row(j) = share * similarity_grad(negs[j], a.unit, s_neg).transpose();
  }
  return r;
}

}  // namespace

std::string_view loss_variant_name(LossVariant variant) {
  switch (variant) {
    case LossVariant::kHardest: return "hardest";
    case LossVariant::kRankK: return "rank_k";
    case LossVariant::kSmoothedRankK: return "smoothed_rank_k";
    case LossVariant::kInfoNce: return "infonce";
    case LossVariant::kPositiveOnly: return "positive_only";
  }
  return "unknown";
}

LossVariant parse_loss_variant(std::string_view name) {
  for (LossVariant v : {LossVariant::kHardest, LossVariant::kRankK, LossVariant::kSmoothedRankK,
                        LossVariant::kInfoNce, LossVariant::kPositiveOnly}) {
    if (loss_variant_name(v) == name) return v;
  }
  throw Error(ErrorCode::kInvalidConfig, "unknown loss variant '" + std::string(name) + "'");
}

void LossConfig::validate() const {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) {
    throw Error(ErrorCode::kInvalidConfig, "gamma must be positive");
  }
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw Error(ErrorCode::kInvalidConfig, "tau must be positive");
  }
  if (!std::isfinite(margin_c)) {
    throw Error(ErrorCode::kInvalidConfig, "margin_c must be finite");
  }
  if (k < 1) {
    throw Error(ErrorCode::kKOutOfRange, "k must be at least 1");
  }
}

std::vector<std::size_t> deputy_ranks(std::size_t m, int k, LossVariant variant) {
  if (m == 0) {
    throw Error(ErrorCode::kEmptyNegatives, "no negatives");
  }
  switch (variant) {
    case LossVariant::kRankK: {
      if (k < 1 || static_cast<std::size_t>(k) > m) {
        throw Error(ErrorCode::kKOutOfRange,
                    "k=" + std::to_string(k) + " with m=" + std::to_string(m));
      }
      return {static_cast<std::size_t>(k)};
    }
    case LossVariant::kSmoothedRankK: {
      if (k < 1 || static_cast<std::size_t>(k) > m) {
        throw Error(ErrorCode::kKOutOfRange,
                    "k=" + std::to_string(k) + " with m=" + std::to_string(m));
      }
      // Ranks 2..2k+1, clamped to the available negatives.
      const std::size_t last = std::min<std::size_t>(2 * static_cast<std::size_t>(k) + 1, m);
      if (last < 2) {
        throw Error(ErrorCode::kKOutOfRange, "smoothed deputy needs at least 2 negatives");
      }
      std::vector<std::size_t> ranks;
      for (std::size_t r = 2; r <= last; ++r) ranks.push_back(r);
      return ranks;
    }
    case LossVariant::kHardest:
    case LossVariant::kInfoNce:
    case LossVariant::kPositiveOnly:
      return {1};
  }
  return {1};
}

DeputySelection select_deputy_distance(const std::vector<double>& sorted_distances, int k,
                                       LossVariant variant) {
  DeputySelection out;
  out.ranks = deputy_ranks(sorted_distances.size(), k, variant);
  double sum = 0.0;
  for (std::size_t r : out.ranks) sum += sorted_distances[r - 1];
  out.distance = sum / static_cast<double>(out.ranks.size());
  return out;
}

LossResult hardest_triplet_loss(const ContrastiveView& view, const LossConfig& cfg) {
  const double w = cfg.gamma_in_hardest ? cfg.gamma : 1.0;
  return triplet_core(view, w, 1, LossVariant::kHardest, cfg.margin_c);
}

LossResult truncated_triplet_loss(const ContrastiveView& view, const LossConfig& cfg) {
  const LossVariant selection =
      cfg.variant == LossVariant::kSmoothedRankK ? LossVariant::kSmoothedRankK : LossVariant::kRankK;
  return triplet_core(view, cfg.gamma, cfg.k, selection, cfg.margin_c);
}

LossResult infonce_loss(const ContrastiveView& view, const LossConfig& cfg) {
  check_view(view);
  if (!(cfg.tau > 0.0)) {
    throw Error(ErrorCode::kInvalidConfig, "tau must be positive");
  }
  const Eigen::Index m = view.negatives.rows();
  const Normalized a = normalize(view.anchor, "anchor");
  const Normalized p = normalize(view.positive, "positive");
  std::vector<Normalized> negs;
  negs.reserve(m);
  // logits[0] is the positive, logits[1 + j] the j-th negative.
  std::vector<double> sims(m + 1);
  sims[0] = a.unit.dot(p.unit);
  for (Eigen::Index j = 0; j < m; ++j) {
    negs.push_back(normalize(view.negatives.row(j).transpose(), "negative"));
    sims[j + 1] = a.unit.dot(negs[j].unit);
  }
  double max_logit = sims[0] / cfg.tau;
  for (double s : sims) max_logit = std::max(max_logit, s / cfg.tau);
  std::vector<double> probs(m + 1);
  double denom = 0.0;
  for (std::size_t i = 0; i < sims.size(); ++i) {
    probs[i] = std::exp(sims[i] / cfg.tau - max_logit);
    denom += probs[i];
  }
  for (double& q : probs) q /= denom;

  LossResult r = zero_result(view);
  r.value = max_logit + std::log(denom) - sims[0] / cfg.tau;

  const double g_pos = (probs[0] - 1.0) / cfg.tau;
  r.grad_anchor = g_pos * similarity_grad(a, p.unit, sims[0]);
  r.grad_positive = g_pos * similarity_grad(p, a.unit, sims[0]);
  for (Eigen::Index j = 0; j < m; ++j) {
    const double g_neg = probs[j + 1] / cfg.tau;
    r.grad_anchor += g_neg * similarity_grad(a, negs[j].unit, sims[j + 1]);
    r.grad_negatives.row(j) = g_neg * similarity_grad(negs[j], a.unit, sims[j + 1]).transpose();
  }
  return r;
}

LossResult positive_only_loss(const ContrastiveView& view, const LossConfig& /*cfg*/) {
  if (view.positive.size() != view.anchor.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "anchor and positive disagree in dimension");
  }
  const Normalized a = normalize(view.anchor, "anchor");
  const Normalized p = normalize(view.positive, "positive");
  const double s = a.unit.dot(p.unit);
  LossResult r;
  r.value = -s;
  r.grad_anchor = -similarity_grad(a, p.unit, s);
  r.grad_positive = -similarity_grad(p, a.unit, s);
  r.grad_negatives = Matrix::Zero(view.negatives.rows(), view.negatives.cols());
  return r;
}

LossResult directional_loss(const ContrastiveView& view, const LossConfig& cfg) {
  switch (cfg.variant) {
    case LossVariant::kHardest: return hardest_triplet_loss(view, cfg);
    case LossVariant::kRankK:
    case LossVariant::kSmoothedRankK: return truncated_triplet_loss(view, cfg);
    case LossVariant::kInfoNce: return infonce_loss(view, cfg);
    case LossVariant::kPositiveOnly: return positive_only_loss(view, cfg);
  }
  throw Error(ErrorCode::kInvalidConfig, "unhandled loss variant");
}

LossResult symmetric_loss(const LossOp& op, const ContrastiveView& view_ab,
                          const ContrastiveView& view_ba, const LossConfig& cfg) {
  if (view_ab.anchor.size() != view_ba.positive.size() ||
      view_ab.positive.size() != view_ba.anchor.size() ||
      view_ab.negatives.rows() != view_ba.negatives.rows() ||
      view_ab.negatives.cols() != view_ba.negatives.cols()) {
    throw Error(ErrorCode::kDimensionMismatch, "swapped view does not mirror the forward view");
  }
  const LossResult ab = op(view_ab, cfg);
  const LossResult ba = op(view_ba, cfg);
  LossResult r;
  r.value = 0.5 * (ab.value + ba.value);
  r.grad_anchor = 0.5 * (ab.grad_anchor + ba.grad_positive);
  r.grad_positive = 0.5 * (ab.grad_positive + ba.grad_anchor);
  r.grad_negatives = 0.5 * (ab.grad_negatives + ba.grad_negatives);
  return r;
}

BatchLossResult batch_loss(const std::vector<ContrastiveView>& views, const LossConfig& cfg) {
  if (views.empty()) {
    throw Error(ErrorCode::kNoBatches, "batch has no anchors");
  }
  const Eigen::Index m = views.front().negatives.rows();
  const double scale = 1.0 / static_cast<double>(views.size());
  BatchLossResult out;
  out.per_view.reserve(views.size());
  for (const ContrastiveView& view : views) {
    if (view.negatives.rows() != m) {
      throw Error(ErrorCode::kDimensionMismatch, "views in a batch must share m");
    }
    LossResult r = directional_loss(view, cfg);
    out.value += r.value;
    r.grad_anchor *= scale;
    r.grad_positive *= scale;
    r.grad_negatives *= scale;
    out.per_view.push_back(std::move(r));
  }
  out.value *= scale;
  return out;
}

}  // namespace deputy
