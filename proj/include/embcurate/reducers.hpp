#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <variant>
#include <vector>

#include "embcurate/matrix.hpp"

namespace embcurate {

/// Standardize-then-project PCA state. `components` is k x d row-major with
/// orthonormal rows ordered by descending explained variance.
struct PcaModel {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  std::vector<double> mean;                // d
  std::vector<double> scale;               // d, population standard deviation (1 for constant dims)
  std::vector<double> components;          // k x d
  std::vector<double> explained_variance;  // k, eigenvalues of the standardized covariance
  double total_variance = 0.0;             // trace of the standardized covariance

  bool operator==(const PcaModel&) const = default;
};

/// Sparse random projection: out = value * signs * x with signs in {-1, 0, +1}.
struct RpModel {
  std::uint64_t seed = 0;
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  double value = 0.0;               // sqrt(d) / sqrt(k)
  std::vector<std::int8_t> signs;   // k x d

  /// Expected ratio ||R z|| / ||z|| of the unnormalized projection.
  double expected_scale() const;

  bool operator==(const RpModel&) const = default;
};

using ReducerModel = std::variant<PcaModel, RpModel>;

struct PcaOptions {
  /// Above this input dimension an iterative top-k solver replaces the dense
  /// symmetric eigendecomposition.
  std::size_t dense_solver_max_dim = 1024;
  double iterative_tolerance = 1e-8;
  std::size_t iterative_max_iters = 500;
};

/// Fits mean/scale on `sample` and the top-k eigenvectors of the standardized
/// covariance (population normalization).
PcaModel fit_pca(const EmbeddingMatrix& sample, std::size_t k, const PcaOptions& options = {});

RpModel fit_rp(std::size_t in_dim, std::size_t k, std::uint64_t seed);

/// Reduced rows plus the indices of rows whose projection had zero norm and
/// were replaced by the unit vector e1.
struct Reduction {
  EmbeddingMatrix values;
  std::vector<std::size_t> degenerate_rows;
};

enum class Normalize { kYes, kNo };

Reduction apply_pca(const PcaModel& model, const EmbeddingMatrix& x, Normalize normalize = Normalize::kYes);
Reduction apply_rp(const RpModel& model, const EmbeddingMatrix& x, Normalize normalize = Normalize::kYes);
Reduction apply_reducer(const ReducerModel& model, const EmbeddingMatrix& x);

/// Seeded subset of at most `max_rows` row indices (ascending); all rows when
/// the matrix is small enough.
std::vector<std::size_t> fit_sample_indices(std::size_t rows, std::size_t max_rows, std::uint64_t seed);

// RED1: "RED1", u8 scheme (1 = PCA, 2 = RP), then scheme payload, little-endian.
void save_reducer(const std::filesystem::path& path, const ReducerModel& model);
ReducerModel load_reducer(const std::filesystem::path& path);

}  // namespace embcurate
