#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "embcurate/clustering.hpp"

namespace embcurate {

/// Per-example loss at one checkpoint, aligned with corpus order.
struct LossTable {
  std::int64_t step = 0;
  std::vector<double> values;
};

enum class VrStatus {
  kOk,
  kConstantLoss,  // overall variance is zero; value is NaN
  kZeroWithin,    // every cluster is loss-constant; value is +inf
};

const char* to_string(VrStatus status);

struct VarianceReduction {
  VrStatus status = VrStatus::kOk;
  double value = 0.0;
  bool ok() const { return status == VrStatus::kOk; }
};

/// Restricts the uniform cluster average to a seeded uniform sample of at
/// most `max_clusters` clusters (0 = all clusters).
struct ClusterSampling {
  std::size_t max_clusters = 0;
  std::uint64_t seed = 0;
};

/// Var_D[loss] / mean over clusters of Var_C[loss], population variances,
/// clusters weighted uniformly (singletons count with zero variance).
VarianceReduction variance_reduction(const Clustering& clustering, std::span<const double> losses,
                                     const ClusterSampling& sampling = {});

/// Uniform-over-clusters mean of (largest single-source count / cluster size).
double cluster_purity(const Clustering& clustering, std::span<const std::uint32_t> sources);

struct MetricsRow {
  std::string model;
  double avg_size_or_eps = 0.0;
  std::int64_t step = 0;
  VarianceReduction variance_reduction;
  std::optional<double> purity;
  std::size_t num_clusters = 0;
  /// counts[b] = clusters whose size lies in [2^b, 2^(b+1)).
  std::vector<std::size_t> size_histogram;
};

struct MetricsReport {
  std::vector<MetricsRow> rows;
  void append(const MetricsReport& other) { rows.insert(rows.end(), other.rows.begin(), other.rows.end()); }
};

std::vector<std::size_t> size_histogram(const Clustering& clustering);

/// Variance reduction for every (clustering, checkpoint) pair, rows ordered by
/// clustering then step. Degenerate cells are flagged, never fatal. Purity is
/// filled in when `sources` is non-empty.
MetricsReport checkpoint_sweep(std::span<const Clustering> clusterings, std::span<const LossTable> loss_tables,
                               const std::string& model = "", std::span<const std::uint32_t> sources = {},
                               const ClusterSampling& sampling = {});

/// Header "model,avg_size_or_eps,step,variance_reduction,purity,num_clusters";
/// flagged variance reductions and missing purities are empty cells.
void save_metrics_csv(const std::filesystem::path& path, const MetricsReport& report);
MetricsReport load_metrics_csv(const std::filesystem::path& path);
void save_metrics_json(const std::filesystem::path& path, const MetricsReport& report);

/// Shortest round-trip decimal form.
std::string format_number(double value);

}  // namespace embcurate
