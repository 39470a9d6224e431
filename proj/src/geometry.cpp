#include "deputy/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "deputy/errors.hpp"

namespace deputy {

namespace {

constexpr double kZeroNormThreshold = 1e-30;

double checked_norm(const Vector& v, const std::string& what) {
  const double norm = v.norm();
  if (!(norm >= kZeroNormThreshold)) {
    throw Error(ErrorCode::kZeroVector, what + " has zero norm");
  }
  return norm;
}

}  // namespace

EmbeddingBatch::EmbeddingBatch(Matrix data) : data_(std::move(data)) {
  if (data_.rows() < 1 || data_.cols() < 1) {
    throw Error(ErrorCode::kDimensionMismatch, "embedding batch must be at least 1x1");
  }
  for (Eigen::Index i = 0; i < data_.rows(); ++i) {
    for (Eigen::Index j = 0; j < data_.cols(); ++j) {
      if (!std::isfinite(data_(i, j))) {
        throw Error(ErrorCode::kNonFiniteValue,
                    "entry (" + std::to_string(i) + ", " + std::to_string(j) + ") is not finite");
      }
    }
  }
}

Vector l2_normalize(const Vector& v) {
  return v / checked_norm(v, "vector");
}

double cosine_distance(const Vector& x, const Vector& y) {
  if (x.size() != y.size()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "vectors of size " + std::to_string(x.size()) + " and " + std::to_string(y.size()));
  }
  const double nx = checked_norm(x, "first vector");
  const double ny = checked_norm(y, "second vector");
  const double d = -x.dot(y) / (nx * ny);
  return std::clamp(d, -1.0, 1.0);
}

DistanceMatrix pairwise_distance_matrix(const EmbeddingBatch& queries,
                                        const EmbeddingBatch& candidates) {
  if (queries.dim() != candidates.dim()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "query dim " + std::to_string(queries.dim()) + " vs candidate dim " +
                    std::to_string(candidates.dim()));
  }
  std::vector<double> qn(queries.rows());
  std::vector<double> cn(candidates.rows());
  for (Eigen::Index i = 0; i < queries.rows(); ++i) {
    qn[i] = checked_norm(queries.row(i), "query row " + std::to_string(i));
  }
  for (Eigen::Index j = 0; j < candidates.rows(); ++j) {
    cn[j] = checked_norm(candidates.row(j), "candidate row " + std::to_string(j));
  }
  DistanceMatrix out(queries.rows(), candidates.rows());
  const Matrix& q = queries.matrix();
  const Matrix& c = candidates.matrix();
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    for (Eigen::Index j = 0; j < c.rows(); ++j) {
      const double d = -q.row(i).dot(c.row(j)) / (qn[i] * cn[j]);
      out(i, j) = std::clamp(d, -1.0, 1.0);
    }
  }
  return out;
}

std::vector<std::size_t> sorted_ascending_with_ties(const std::vector<double>& row) {
  if (row.empty()) {
    throw Error(ErrorCode::kEmptyRow, "cannot sort an empty row");
  }
  std::vector<std::size_t> order(row.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&row](std::size_t a, std::size_t b) { return row[a] < row[b]; });
  return order;
}

}  // namespace deputy
