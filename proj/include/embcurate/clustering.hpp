#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace embcurate {

/// Where a partition came from.
struct Provenance {
  std::string algorithm;   // "balanced-kmeans", "rac", "planted", "random", ...
  double parameter = 0.0;  // average cluster size or epsilon
  std::uint64_t seed = 0;
};

/// Partition of example indices [0, n) into m non-empty clusters with dense
/// ids in [0, m).
class Clustering {
 public:
  /// Validates density and non-emptiness of the ids.
  Clustering(std::vector<std::uint32_t> assignments, std::size_t num_clusters,
             Provenance provenance = {});

  /// Relabels arbitrary ids to dense ids in order of first appearance.
  static Clustering from_labels(std::span<const std::uint64_t> labels, Provenance provenance = {});

  std::size_t size() const { return assignments_.size(); }
  std::size_t num_clusters() const { return num_clusters_; }
  std::uint32_t cluster_of(std::size_t example) const { return assignments_[example]; }
  const std::vector<std::uint32_t>& assignments() const { return assignments_; }
  const Provenance& provenance() const { return provenance_; }

  std::vector<std::size_t> cluster_sizes() const;

  /// Member lists grouped by cluster; members ascending within each cluster.
  struct Members {
    std::vector<std::size_t> offsets;  // m + 1 entries
    std::vector<std::size_t> indices;
    std::span<const std::size_t> of(std::size_t cluster) const {
      return {indices.data() + offsets[cluster], offsets[cluster + 1] - offsets[cluster]};
    }
  };
  Members members() const;

  /// Same partition regardless of cluster numbering.
  bool same_partition(const Clustering& other) const;

  /// True when every cluster of *this is contained in a cluster of `coarser`.
  bool refines(const Clustering& coarser) const;

 private:
  std::vector<std::uint32_t> assignments_;
  std::size_t num_clusters_;
  Provenance provenance_;
};

/// CSV with header "example_id,cluster_id". Row i is written with
/// example_id = ids[i] (or i when `ids` is empty).
void save_clustering_csv(const std::filesystem::path& path, const Clustering& clustering,
                         std::span<const std::uint64_t> ids = {});

/// Reads a clustering CSV. When `ids` is given, example ids are mapped to row
/// positions through it and every id must appear exactly once; otherwise the
/// example ids must be exactly 0..n-1.
Clustering load_clustering_csv(const std::filesystem::path& path,
                               std::span<const std::uint64_t> ids = {});

}  // namespace embcurate
