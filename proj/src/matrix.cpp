#include "embcurate/matrix.hpp"

#include <cmath>
#include <string>

#include "embcurate/error.hpp"

namespace embcurate {

EmbeddingMatrix::EmbeddingMatrix(std::size_t rows, std::size_t dim)
    : rows_(rows), dim_(dim), values_(rows * dim, 0.0f) {
  if (rows == 0 || dim == 0) throw ValidationError("embedding matrix must have n >= 1 and d >= 1");
}

EmbeddingMatrix::EmbeddingMatrix(std::size_t rows, std::size_t dim, std::vector<float> values)
    : rows_(rows), dim_(dim), values_(std::move(values)) {
  if (rows == 0 || dim == 0) throw ValidationError("embedding matrix must have n >= 1 and d >= 1");
  if (values_.size() != rows * dim) {
    throw ValidationError("embedding matrix holds " + std::to_string(values_.size()) +
                          " values, expected " + std::to_string(rows * dim));
  }
  check_finite();
}

void EmbeddingMatrix::check_finite() const {
  for (std::size_t i = 0; i < rows_; ++i) {
    for (float v : row(i)) {
      if (!std::isfinite(v)) throw ValidationError("non-finite value at row " + std::to_string(i));
    }
  }
}

EmbeddingMatrix EmbeddingMatrix::select_rows(std::span<const std::size_t> indices) const {
  std::vector<float> out;
  out.reserve(indices.size() * dim_);
  for (std::size_t i : indices) {
    if (i >= rows_) throw ValidationError("row index " + std::to_string(i) + " out of range");
    const auto r = row(i);
    out.insert(out.end(), r.begin(), r.end());
  }
  return EmbeddingMatrix(indices.size(), dim_, std::move(out));
}

double squared_distance(std::span<const float> a, std::span<const float> b) {
  double acc = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t) {
    const double diff = static_cast<double>(a[t]) - static_cast<double>(b[t]);
    acc += diff * diff;
  }
  return acc;
}

double l2_norm(std::span<const float> a) {
  double acc = 0.0;
  for (float v : a) acc += static_cast<double>(v) * v;
  return std::sqrt(acc);
}

}  // namespace embcurate
