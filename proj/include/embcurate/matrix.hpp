#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace embcurate {

/// Dense n x d row-major table of 32-bit embeddings, one row per example.
/// Always non-empty and finite once constructed.
class EmbeddingMatrix {
 public:
  /// Zero-filled matrix.
  EmbeddingMatrix(std::size_t rows, std::size_t dim);
  /// Takes ownership of `values` (row-major); validates shape and finiteness.
  EmbeddingMatrix(std::size_t rows, std::size_t dim, std::vector<float> values);

  std::size_t rows() const { return rows_; }
  std::size_t dim() const { return dim_; }

  std::span<const float> row(std::size_t i) const { return {values_.data() + i * dim_, dim_}; }
  std::span<float> row(std::size_t i) { return {values_.data() + i * dim_, dim_}; }

  const float* data() const { return values_.data(); }
  float* data() { return values_.data(); }
  const std::vector<float>& values() const { return values_; }

  /// Throws ValidationError naming the first row holding NaN or Inf.
  void check_finite() const;

  /// Copies the given rows, in order, into a new matrix.
  EmbeddingMatrix select_rows(std::span<const std::size_t> indices) const;

  bool operator==(const EmbeddingMatrix&) const = default;

 private:
  std::size_t rows_;
  std::size_t dim_;
  std::vector<float> values_;
};

/// Squared Euclidean distance accumulated in double, dimension by dimension
/// in index order.
double squared_distance(std::span<const float> a, std::span<const float> b);

/// Euclidean norm of a row, in double.
double l2_norm(std::span<const float> a);

}  // namespace embcurate
