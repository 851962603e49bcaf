#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "embcurate/clustering.hpp"
#include "embcurate/corpus_io.hpp"
#include "embcurate/matrix.hpp"

namespace embcurate::testkit {

/// Planted-structure corpus description. Cluster centers live in a
/// `latent_dim`-dimensional subspace of the `d`-dimensional embedding space;
/// per-example losses are mu_cluster + N(0, sigma_within^2) with
/// mu_cluster ~ N(0, sigma_between^2).
struct SyntheticSpec {
  std::size_t n = 10000;
  std::size_t d = 64;
  std::size_t latent_dim = 0;         // 0 means d
  std::size_t k_true = 200;
  std::uint32_t num_sources = 8;
  double source_purity = 0.9;         // P(example carries its cluster's dominant source)
  double center_scale = 1.0;          // per-latent-dim std of planted centers
  double cluster_spread = 0.15;       // per-latent-dim within-cluster std
  double ambient_noise = 0.05;        // per-dim isotropic noise std
  double sigma_between = 3.0;
  double sigma_within = 1.0;
  std::vector<std::int64_t> steps = {2000, 10000, 26000};
  double duplicate_fraction = 0.0;
  std::uint64_t min_tokens = 64;
  std::uint64_t max_tokens = 1280;
  bool noise_model = true;            // also emit pure-noise embeddings ("noise")
  std::size_t vocab_size = 0;         // > 0 also emits token documents and a token table
  std::size_t table_dim = 64;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticCorpus {
  Corpus corpus;                      // embeddings "planted" (+ "noise")
  std::vector<std::uint32_t> planted; // ground-truth cluster per example
  std::vector<std::pair<std::size_t, std::size_t>> duplicates;  // (copy, original)
  std::vector<TokenSequence> documents;                         // when vocab_size > 0
  std::optional<EmbeddingMatrix> token_table;
};

SyntheticCorpus generate(const SyntheticSpec& spec);

/// VR expected when the planted clusters are recovered exactly.
double expected_planted_variance_reduction(const SyntheticSpec& spec);

/// Random partition of n points into round(n / avg_size) near-equal clusters.
Clustering random_clustering(std::size_t n, std::size_t avg_size, std::uint64_t seed);

/// Chance-corrected agreement between two labelings.
double adjusted_rand_index(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b);

// ---- Brute-force oracles. Independent of the production code paths. ----

/// Variance reduction by the pairwise-difference form of the population
/// variance, grouping by label scan. n <= 1000.
double oracle_variance_reduction(std::span<const std::uint32_t> labels, std::span<const double> losses);

/// Naive complete linkage: repeatedly merge the globally closest pair (ties by
/// lowest labels) while its linkage is <= epsilon. n <= 1000. Returns one
/// label per point (the smallest member index of its cluster).
std::vector<std::uint32_t> oracle_complete_linkage(const EmbeddingMatrix& x, double epsilon);

struct OraclePca {
  std::vector<double> components;  // k x d, orthonormal rows
  std::vector<double> eigenvalues; // all d, descending
};

/// Standardize, form the covariance by explicit double loops, diagonalize by
/// cyclic Jacobi rotations. d <= 32.
OraclePca oracle_pca(const EmbeddingMatrix& sample, std::size_t k);

/// Largest principal angle (radians) between the row spaces of two k x d
/// matrices with orthonormal rows.
double max_principal_angle(std::span<const double> a, std::span<const double> b, std::size_t k, std::size_t d);

/// Exhaustive minimum-SSE partition into exactly m clusters with sizes in
/// [min_size, max_size]. n <= 10.
std::vector<std::uint32_t> oracle_min_sse_partition(const EmbeddingMatrix& x, std::size_t m, std::size_t min_size,
                                                    std::size_t max_size);

}  // namespace embcurate::testkit
