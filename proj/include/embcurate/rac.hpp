#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "embcurate/clustering.hpp"
#include "embcurate/matrix.hpp"

namespace embcurate {

/// Strictly ascending, positive epsilon values (squared L2 diameters).
class EpsilonGrid {
 public:
  explicit EpsilonGrid(std::vector<double> values);
  const std::vector<double>& values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  double max() const { return values_.back(); }

 private:
  std::vector<double> values_;
};

/// Merge of the clusters labelled `a` < `b` at complete-linkage height
/// `height`. A cluster is labelled by its smallest member index, so after the
/// merge the union keeps label `a`.
struct Merge {
  std::uint32_t a = 0;
  std::uint32_t b = 0;
  double height = 0.0;
  bool operator==(const Merge&) const = default;
};

/// Complete-linkage merges with height <= epsilon_max, sorted by height.
struct Dendrogram {
  std::size_t num_points = 0;
  double epsilon_max = 0.0;
  std::vector<Merge> merges;

  /// Partition obtained by applying every merge with height <= epsilon.
  Clustering cut(double epsilon) const;
  /// Number of clusters of cut(epsilon), without materializing it.
  std::size_t num_clusters_at(double epsilon) const;

  bool operator==(const Dendrogram&) const = default;
};

struct RacOptions {
  /// Restrict candidate pairs with a sorted sweep over the leading coordinate
  /// (lossless: a coordinate gap above sqrt(eps) implies distance above eps).
  bool coordinate_pruning = false;
};

/// Reciprocal-nearest-neighbor agglomeration under complete linkage, built
/// only from pairs at squared distance <= epsilon_max.
Dendrogram build_dendrogram(const EmbeddingMatrix& x, double epsilon_max, const RacOptions& options = {});

/// Clusters whose pairwise squared distances are all <= epsilon.
Clustering rac_cluster(const EmbeddingMatrix& x, double epsilon, const RacOptions& options = {});

struct EpsilonChoice {
  double epsilon;
  Clustering clustering;
};

/// Largest grid value whose cut has at least `required_clusters` clusters.
EpsilonChoice epsilon_sweep(const Dendrogram& dendrogram, const EpsilonGrid& grid, std::size_t required_clusters);

// DND1: "DND1", u32 n, f64 epsilon_max, u32 count, count x (u32 a, u32 b, f64 height).
void save_dendrogram(const std::filesystem::path& path, const Dendrogram& dendrogram);
Dendrogram load_dendrogram(const std::filesystem::path& path);

/// Suggested defaults for common embedding models
/// (USE, Gecko: 0.2; BERT, LM token embeds: 0.001; LM output embeds: 0.03).
/// Returns 0 for unknown tags.
double default_epsilon_for(std::string_view model_tag);

}  // namespace embcurate
