#include <gtest/gtest.h>

#include "embcurate/balanced_kmeans.hpp"
#include "embcurate/error.hpp"
#include "embcurate/parallel.hpp"
#include "embcurate/testkit.hpp"
#include "test_util.hpp"

using namespace embcurate;

namespace {

EmbeddingMatrix two_blobs(std::size_t per_blob, double separation, std::uint64_t seed, std::vector<std::uint32_t>& labels) {
  Rng rng(seed);
  const std::size_t d = 8;
  std::vector<float> v;
  labels.clear();
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t i = 0; i < per_blob; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        const double center = (j == 0 && b == 1) ? separation : 0.0;
        v.push_back(static_cast<float>(center + rng.normal()));
      }
      labels.push_back(static_cast<std::uint32_t>(b));
    }
  }
  return EmbeddingMatrix(2 * per_blob, d, std::move(v));
}

void expect_sizes_within(const Clustering& c, const SizeBounds& b) {
  for (auto s : c.cluster_sizes()) {
    EXPECT_GE(s, b.min_size);
    EXPECT_LE(s, b.max_size);
  }
}

}  // namespace

TEST(RatioTest, Parse) {
  EXPECT_EQ(Ratio::parse("1/5").str(), "1/5");
  EXPECT_EQ(Ratio::parse("5").str(), "5");
  EXPECT_EQ(Ratio::parse("0.2").str(), "1/5");
  EXPECT_EQ(Ratio::parse("2/10").str(), "1/5");
  EXPECT_THROW(Ratio::parse("1/0"), ValidationError);
  EXPECT_THROW(Ratio::parse("x"), ValidationError);
}

TEST(SizeBoundsTest, Defaults) {
  BalanceConfig c;
  c.avg_size = 50;
  const auto b = size_bounds(15000, c);
  EXPECT_EQ(b.num_clusters, 300u);
  EXPECT_EQ(b.min_size, 10u);
  EXPECT_EQ(b.max_size, 250u);
  c.avg_size = 3;
  EXPECT_THROW(size_bounds(10, c), ValidationError);  // 3/5 < 1
  c.min_factor = Ratio{1, 3};
  EXPECT_EQ(size_bounds(10, c).min_size, 1u);
  c.min_factor = Ratio{1, 5};
  c.avg_size = 2;
  c.min_factor = Ratio{1, 1};
  c.max_factor = Ratio{1, 1};
  EXPECT_THROW(size_bounds(5, c), InfeasibleError);
  c.avg_size = 20;
  EXPECT_THROW(size_bounds(10, c), InfeasibleError);
  c.avg_size = 5;
  c.min_factor = Ratio{1, 10};
  EXPECT_THROW(size_bounds(100, c), ValidationError);
}

TEST(BalancedKmeans, OneClusterWhenNEqualsAvg) {
  const auto x = test_util::unit_rows(test_util::gaussian_matrix(30, 4, 1));
  BalanceConfig c;
  c.avg_size = 30;
  const auto cl = balanced_kmeans(x, c);
  EXPECT_EQ(cl.num_clusters(), 1u);
}

TEST(BalancedKmeans, RecoversTwoSeparatedBlobs) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::vector<std::uint32_t> labels;
    const auto x = two_blobs(50, 10.0, seed, labels);
    BalanceConfig c;
    c.avg_size = 50;
    c.seed = seed;
    const auto cl = balanced_kmeans(x, c);
    EXPECT_EQ(testkit::adjusted_rand_index(cl.assignments(), labels), 1.0) << "seed " << seed;
  }
}

TEST(BalancedKmeans, TwoTightPairsMatchExhaustiveOptimum) {
  const EmbeddingMatrix x(4, 2, {0.0f, 0.0f, 10.0f, 10.0f, 0.1f, 0.0f, 10.0f, 10.1f});
  BalanceConfig c;
  c.avg_size = 2;
  c.min_factor = Ratio{1, 2};
  const auto b = size_bounds(4, c);
  const auto cl = balanced_kmeans(x, c);
  const auto best = testkit::oracle_min_sse_partition(x, b.num_clusters, b.min_size, b.max_size);
  EXPECT_TRUE(cl.same_partition(Clustering::from_labels(std::vector<std::uint64_t>(best.begin(), best.end()))));
  EXPECT_EQ(cl.cluster_of(0), cl.cluster_of(2));
  EXPECT_EQ(cl.cluster_of(1), cl.cluster_of(3));
}

TEST(BalancedKmeans, SmallInstancesNearExhaustiveOptimum) {
  // Greedy capacity assignment is a heuristic; on well-separated small data it
  // should still land on the optimal size-legal partition.
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    std::vector<float> v;
    for (int g = 0; g < 3; ++g)
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 2; ++j) v.push_back(static_cast<float>(g * 20 * (j == g % 2) + 0.5 * rng.normal()));
    const EmbeddingMatrix x(9, 2, v);
    BalanceConfig c;
    c.avg_size = 3;
    c.min_factor = Ratio{1, 3};
    c.seed = seed;
    const auto b = size_bounds(9, c);
    const auto cl = balanced_kmeans(x, c);
    const auto best = testkit::oracle_min_sse_partition(x, b.num_clusters, b.min_size, b.max_size);
    const auto best_c = Clustering::from_labels(std::vector<std::uint64_t>(best.begin(), best.end()));
    EXPECT_NEAR(within_cluster_sse(x, cl), within_cluster_sse(x, best_c), 1e-6) << "seed " << seed;
  }
}

TEST(BalancedKmeans, SizeBoundsHoldOnSkewedData) {
  // One dense blob holding most points forces the capacity and repair paths.
  Rng rng(3);
  std::vector<float> v;
  const std::size_t n = 600;
  for (std::size_t i = 0; i < n; ++i) {
    const bool far = i % 10 == 0;
    for (std::size_t j = 0; j < 4; ++j) v.push_back(static_cast<float>((far ? 5.0 * rng.normal() : 0.01 * rng.normal())));
  }
  const EmbeddingMatrix x(n, 4, v);
  for (std::size_t avg : {5, 12, 30, 100}) {
    BalanceConfig c;
    c.avg_size = avg;
    c.seed = avg;
    const auto run = balanced_kmeans_run(x, c);
    expect_sizes_within(run.clustering, size_bounds(n, c));
    EXPECT_EQ(run.clustering.num_clusters(), size_bounds(n, c).num_clusters);
    for (std::size_t i = 1; i < run.objective_history.size(); ++i) {
      EXPECT_LE(run.objective_history[i], run.objective_history[i - 1] * (1 + 1e-12));
    }
    EXPECT_FALSE(run.warnings.empty());  // rows are not unit-normalized
  }
}

TEST(BalancedKmeans, DeterministicAcrossThreadCounts) {
  const auto x = test_util::unit_rows(test_util::gaussian_matrix(5000, 16, 5));
  BalanceConfig c;
  c.avg_size = 25;
  c.seed = 9;
  const unsigned saved = thread_count();
  set_thread_count(1);
  const auto a = balanced_kmeans(x, c);
  set_thread_count(4);
  const auto b = balanced_kmeans(x, c);
  set_thread_count(saved);
  EXPECT_EQ(a.assignments(), b.assignments());
  expect_sizes_within(a, size_bounds(5000, c));
}

TEST(KmeansSweep, SizesAndErrors) {
  const auto x = test_util::unit_rows(test_util::gaussian_matrix(15000, 8, 6));
  const std::vector<std::size_t> sizes{25, 50, 100, 150};
  BalanceConfig base;
  base.max_iters = 3;
  const auto out = kmeans_sweep(x, sizes, 1, base);
  ASSERT_EQ(out.size(), 4u);
  EXPECT_EQ(out[0].num_clusters(), 600u);
  EXPECT_EQ(out[1].num_clusters(), 300u);
  EXPECT_EQ(out[2].num_clusters(), 150u);
  EXPECT_EQ(out[3].num_clusters(), 100u);
  EXPECT_EQ(out[1].provenance().seed, mix_seed(1, 50));
  EXPECT_TRUE(kmeans_sweep(x, std::vector<std::size_t>{}, 1).empty());
  try {
    kmeans_sweep(x, std::vector<std::size_t>{25, 25}, 1);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("duplicate sweep size"), std::string::npos);
  }
  try {
    kmeans_sweep(test_util::gaussian_matrix(20, 2, 1), std::vector<std::size_t>{5, 40}, 1);
    FAIL();
  } catch (const InfeasibleError& e) {
    EXPECT_NE(std::string(e.what()).find("40"), std::string::npos);
  }
}
