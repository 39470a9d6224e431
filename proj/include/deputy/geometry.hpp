#ifndef DEPUTY_GEOMETRY_HPP_
#define DEPUTY_GEOMETRY_HPP_

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

namespace deputy {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// n x d block of finite representation vectors, one per row.
class EmbeddingBatch {
 public:
  EmbeddingBatch() = default;
  // Throws DimensionMismatch for an empty matrix, NonFiniteValue for NaN/Inf.
  explicit EmbeddingBatch(Matrix data);

  Eigen::Index rows() const { return data_.rows(); }
  Eigen::Index dim() const { return data_.cols(); }
  const Matrix& matrix() const { return data_; }
  Vector row(Eigen::Index i) const { return data_.row(i).transpose(); }

 private:
  Matrix data_;
};

// Entry (i, j) is cosine_distance(queries[i], candidates[j]).
using DistanceMatrix = Matrix;

Vector l2_normalize(const Vector& v);

// Negated cosine similarity: -1 for parallel vectors, +1 for anti-parallel.
double cosine_distance(const Vector& x, const Vector& y);

DistanceMatrix pairwise_distance_matrix(const EmbeddingBatch& queries,
                                        const EmbeddingBatch& candidates);

// Stable ascending argsort; equal values keep their original index order.
std::vector<std::size_t> sorted_ascending_with_ties(const std::vector<double>& row);

}  // namespace deputy

#endif  // DEPUTY_GEOMETRY_HPP_
