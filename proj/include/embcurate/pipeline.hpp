#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "embcurate/balanced_kmeans.hpp"
#include "embcurate/config.hpp"
#include "embcurate/corpus_io.hpp"
#include "embcurate/curate.hpp"
#include "embcurate/error.hpp"

namespace embcurate {

struct ModelInput {
  std::string tag;
  std::filesystem::path embeddings;
  std::vector<double> epsilon_grid;  // empty: use the shared grid
};

/// Optional bag-of-tokens model computed inside the pipeline.
struct TokenModelInput {
  std::string tag = "lm-token-embeds";
  std::filesystem::path documents;
  std::filesystem::path table;
  std::vector<TokenId> mask;
  bool append_eod = true;  // embed each document as it sits in the packed stream, eod included
  TokenId eod_token = 1;
};

/// Everything a run depends on. Relative paths in a config file resolve
/// against the file's directory.
struct PipelineConfig {
  std::filesystem::path metadata;
  std::vector<ModelInput> models;
  std::optional<TokenModelInput> token_model;
  std::filesystem::path out_dir = "embcurate-run";
  std::uint64_t seed = 0;

  std::string reducer = "pca";  // "pca" or "rp"
  std::size_t components = 64;
  std::size_t fit_sample = 500000;

  std::vector<std::size_t> sweep_sizes = {25, 50, 100, 150};
  Ratio min_factor{1, 5};
  Ratio max_factor{5, 1};
  std::size_t max_iters = 25;
  std::size_t seeding_trials = 0;

  std::vector<double> epsilon_grid = {0.0005, 0.001, 0.002, 0.005, 0.01, 0.02, 0.03, 0.05, 0.1, 0.2, 0.3};
  bool coordinate_pruning = false;

  std::optional<std::uint64_t> budget_tokens;
  double budget_fraction = 0.2;
  Overshoot overshoot = Overshoot::kDrop;
  bool by_count = false;

  std::size_t max_metric_clusters = 0;  // 0: every cluster
  std::vector<std::int64_t> steps;       // empty: every checkpoint in the metadata

  static PipelineConfig from_tree(const ConfigTree& tree, const std::filesystem::path& base_dir = {});
  static PipelineConfig load(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

  /// Checks values and that every referenced input exists. Runs before any compute.
  void validate() const;

  std::uint64_t reduce_seed() const;
  std::uint64_t kmeans_seed() const;
  std::uint64_t baseline_seed() const;
  std::uint64_t metrics_seed() const;
};

/// A stage failed; the message names the stage and the cause.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& message)
      : Error("stage '" + stage + "' failed: " + message), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct StageOutcome {
  std::string name;
  bool executed = false;
};

struct PipelineResult {
  std::filesystem::path out_dir;
  std::filesystem::path manifest;
  std::vector<StageOutcome> stages;
};

/// Runs every stage in order, skipping stages whose recorded content hash
/// matches. The manifest and artifacts do not depend on the thread count.
PipelineResult run_pipeline(const PipelineConfig& config);

}  // namespace embcurate
