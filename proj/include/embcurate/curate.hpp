#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "embcurate/clustering.hpp"
#include "embcurate/corpus_io.hpp"
#include "embcurate/matrix.hpp"
#include "embcurate/rac.hpp"

namespace embcurate {

enum class Overshoot {
  kDrop,   // stop before the example that would cross the budget
  kAllow,  // admit that example, then stop
};

struct CurationOptions {
  Overshoot overshoot = Overshoot::kDrop;
  /// Match cluster count against budget / sequence length instead of
  /// representative token totals. Requires equal token counts.
  bool by_count = false;
};

struct CurationPlan {
  double epsilon_chosen = 0.0;
  std::vector<std::uint64_t> selected_ids;
  std::uint64_t token_total = 0;
  std::uint64_t budget = 0;
  bool baseline = false;
  std::uint64_t seed = 0;
  std::size_t num_clusters = 0;              // clusters at epsilon_chosen
  std::uint64_t representative_tokens = 0;   // tokens over all representatives
};

struct Representative {
  std::size_t index = 0;     // row in the embedding matrix
  std::size_t cluster = 0;
  std::size_t cluster_size = 0;
  double centroid_distance = 0.0;
};

/// Per cluster, the member nearest (squared L2) to the cluster mean; ties go
/// to the lowest row. Returned in cluster-id order.
std::vector<Representative> find_representatives(const Clustering& clustering, const EmbeddingMatrix& x);

/// Row indices of find_representatives.
std::vector<std::size_t> select_representatives(const Clustering& clustering, const EmbeddingMatrix& x);

/// Largest grid epsilon whose representatives can fill the budget, then
/// representatives ranked by cluster size (desc), centroid distance (asc),
/// row (asc), truncated at the budget.
CurationPlan curate(std::span<const ExampleRecord> records, const EmbeddingMatrix& x, const Dendrogram& dendrogram,
                    const EpsilonGrid& grid, std::uint64_t budget_tokens, const CurationOptions& options = {});

/// Seeded uniform permutation, prefix taken up to the budget.
CurationPlan random_baseline(std::span<const ExampleRecord> records, std::uint64_t budget_tokens, std::uint64_t seed,
                             Overshoot overshoot = Overshoot::kDrop);

/// Writes selected ids one per line to `path` and a JSON sidecar next to it
/// (same stem, ".json").
void save_plan(const std::filesystem::path& path, const CurationPlan& plan);
CurationPlan load_plan(const std::filesystem::path& path);
std::filesystem::path plan_sidecar_path(const std::filesystem::path& path);

}  // namespace embcurate
