#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "embcurate/clustering.hpp"
#include "embcurate/matrix.hpp"

namespace embcurate {

/// Exact non-negative rational, e.g. the 1/5 lower size factor.
struct Ratio {
  std::uint64_t num = 1;
  std::uint64_t den = 1;

  /// Parses "p/q", an integer, or a decimal with up to 9 fractional digits.
  static Ratio parse(const std::string& text);
  std::string str() const;
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
};

struct BalanceConfig {
  std::size_t avg_size = 50;
  Ratio min_factor{1, 5};
  Ratio max_factor{5, 1};
  std::uint64_t seed = 0;
  std::size_t max_iters = 25;
  std::size_t seeding_trials = 0;  // candidates per seeding step; 0 picks 2 + ln(m)
};

/// Cluster count and admissible size band derived from a config for n points.
struct SizeBounds {
  std::size_t num_clusters = 0;
  std::size_t min_size = 0;
  std::size_t max_size = 0;
};

/// m = round(n / avg) (at least 1); sizes in [ceil(min*avg), floor(max*avg)]
/// clamped to [1, n]. Throws InfeasibleError when m clusters cannot respect
/// the band.
SizeBounds size_bounds(std::size_t n, const BalanceConfig& config);

struct KmeansRun {
  Clustering clustering;
  std::vector<float> centroids;          // m x d, means of the final clusters
  std::vector<double> objective_history; // SSE after each centroid update
  std::size_t iterations = 0;
  bool converged = false;
  std::size_t repaired_points = 0;       // moved by the minimum-size repair
  std::vector<std::string> warnings;
};

/// Balanced K-means under squared L2: k-means++ seeding, Lloyd iterations
/// whose assignment step is a greedy capacity-constrained assignment, then a
/// minimum-size repair.
KmeansRun balanced_kmeans_run(const EmbeddingMatrix& x, const BalanceConfig& config);

inline Clustering balanced_kmeans(const EmbeddingMatrix& x, const BalanceConfig& config) {
  return balanced_kmeans_run(x, config).clustering;
}

/// One clustering per average size, each seeded from (seed, size). `base`
/// supplies the size factors and iteration cap.
std::vector<Clustering> kmeans_sweep(const EmbeddingMatrix& x, std::span<const std::size_t> avg_sizes,
                                     std::uint64_t seed, const BalanceConfig& base = {});

/// Sum over points of the squared distance to their cluster mean.
double within_cluster_sse(const EmbeddingMatrix& x, const Clustering& clustering);

}  // namespace embcurate
