#ifndef DEPUTY_LOSSES_HPP_
#define DEPUTY_LOSSES_HPP_

#include <cstddef>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "deputy/geometry.hpp"

namespace deputy {

enum class LossVariant {
  kHardest,
  kRankK,
  kSmoothedRankK,
  kInfoNce,
  // Positive-pair term only (no negatives); the BYOL-style baseline.
  kPositiveOnly,
};

std::string_view loss_variant_name(LossVariant variant);
// Throws InvalidConfig for an unknown name.
LossVariant parse_loss_variant(std::string_view name);

struct LossConfig {
  LossVariant variant = LossVariant::kRankK;
  double gamma = 2.0;
  double margin_c = -100.0;
  int k = 1;
  double tau = 0.2;
  bool symmetric = true;
  // Eq. 1 carries no positive weight; set this to apply gamma there as well.
  bool gamma_in_hardest = false;

  void validate() const;
};

// One anchor, its positive, and m negatives stored row-wise (m x d).
struct ContrastiveView {
  Vector anchor;
  Vector positive;
  Matrix negatives;

  Eigen::Index num_negatives() const { return negatives.rows(); }
};

struct LossResult {
  double value = 0.0;
  Vector grad_anchor;
  Vector grad_positive;
  Matrix grad_negatives;
};

struct DeputySelection {
  double distance = 0.0;
  // 1-indexed ranks into the ascending order that make up the deputy.
  std::vector<std::size_t> ranks;
};

// Ranks (1-indexed) whose negatives form the deputy of `variant` when m
// negatives are present. Hardest, InfoNCE and positive-only report rank 1.
std::vector<std::size_t> deputy_ranks(std::size_t m, int k, LossVariant variant);

DeputySelection select_deputy_distance(const std::vector<double>& sorted_distances, int k,
                                       LossVariant variant);

LossResult hardest_triplet_loss(const ContrastiveView& view, const LossConfig& cfg);
LossResult truncated_triplet_loss(const ContrastiveView& view, const LossConfig& cfg);
LossResult infonce_loss(const ContrastiveView& view, const LossConfig& cfg);
LossResult positive_only_loss(const ContrastiveView& view, const LossConfig& cfg);

// Dispatches on cfg.variant.
LossResult directional_loss(const ContrastiveView& view, const LossConfig& cfg);

using LossOp = std::function<LossResult(const ContrastiveView&, const LossConfig&)>;

// Mean of op(view_ab) and op(view_ba). view_ba is view_ab with anchor and
// positive swapped; negatives are matched slot-for-slot. Gradients are
// returned in view_ab's coordinates (grad_anchor is for view_ab.anchor).
LossResult symmetric_loss(const LossOp& op, const ContrastiveView& view_ab,
                          const ContrastiveView& view_ba, const LossConfig& cfg);

struct BatchLossResult {
  double value = 0.0;
  // Per-view gradients of the batch mean (already scaled by 1/n).
  std::vector<LossResult> per_view;
};

// Mean over anchors, reduced in index order.
BatchLossResult batch_loss(const std::vector<ContrastiveView>& views, const LossConfig& cfg);

}  // namespace deputy

#endif  // DEPUTY_LOSSES_HPP_
