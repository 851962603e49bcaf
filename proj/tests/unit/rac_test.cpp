#include <fstream>
#include <gtest/gtest.h>

#include "embcurate/error.hpp"
#include "embcurate/parallel.hpp"
#include "embcurate/rac.hpp"
#include "embcurate/testkit.hpp"
#include "test_util.hpp"

using namespace embcurate;

namespace {

double max_intra_distance(const EmbeddingMatrix& x, const Clustering& c) {
  const auto members = c.members();
  double worst = 0.0;
  for (std::size_t k = 0; k < c.num_clusters(); ++k) {
    const auto m = members.of(k);
    for (std::size_t i = 0; i < m.size(); ++i)
      for (std::size_t j = i + 1; j < m.size(); ++j) worst = std::max(worst, squared_distance(x.row(m[i]), x.row(m[j])));
  }
  return worst;
}

Clustering from_oracle(const std::vector<std::uint32_t>& labels) {
  return Clustering::from_labels(std::vector<std::uint64_t>(labels.begin(), labels.end()));
}

}  // namespace

TEST(EpsilonGridTest, Validation) {
  EXPECT_NO_THROW(EpsilonGrid({0.1, 0.2}));
  EXPECT_THROW(EpsilonGrid({}), ValidationError);
  EXPECT_THROW(EpsilonGrid({0.2, 0.1}), ValidationError);
  EXPECT_THROW(EpsilonGrid({0.1, 0.1}), ValidationError);
  EXPECT_THROW(EpsilonGrid({0.0, 0.1}), ValidationError);
}

TEST(Rac, SmallEpsilonGivesSingletons) {
  const auto x = test_util::gaussian_matrix(100, 4, 1);
  const auto c = rac_cluster(x, 1e-6);
  EXPECT_EQ(c.num_clusters(), 100u);
  const auto d = build_dendrogram(x, 1.0);
  EXPECT_EQ(d.cut(0.0).num_clusters(), 100u);
}

TEST(Rac, DiameterGivesOneCluster) {
  const auto x = test_util::gaussian_matrix(150, 3, 2);
  double diameter = 0.0;
  for (std::size_t i = 0; i < 150; ++i)
    for (std::size_t j = i + 1; j < 150; ++j) diameter = std::max(diameter, squared_distance(x.row(i), x.row(j)));
  EXPECT_EQ(rac_cluster(x, diameter).num_clusters(), 1u);
  EXPECT_EQ(testkit::oracle_complete_linkage(x, diameter), std::vector<std::uint32_t>(150, 0));
}

TEST(Rac, TwoTightPairs) {
  // pair distance 0.1 (squared 0.01); pairs 1.0 apart
  const EmbeddingMatrix x(4, 2, {0.0f, 0.0f, 1.0f, 0.0f, 0.0f, 0.1f, 1.0f, 0.1f});
  const auto c = rac_cluster(x, 0.1);
  EXPECT_EQ(c.num_clusters(), 2u);
  EXPECT_EQ(c.cluster_of(0), c.cluster_of(2));
  EXPECT_EQ(c.cluster_of(1), c.cluster_of(3));
  EXPECT_NE(c.cluster_of(0), c.cluster_of(1));
}

TEST(Rac, CutMatchesDirectClusteringAndNests) {
  const auto x = test_util::unit_rows(test_util::gaussian_matrix(500, 6, 3));
  const auto dendro = build_dendrogram(x, 1.0);
  for (std::size_t i = 1; i < dendro.merges.size(); ++i) EXPECT_LE(dendro.merges[i - 1].height, dendro.merges[i].height);
  EXPECT_LE(dendro.merges.size(), 499u);
  std::optional<Clustering> previous;
  for (int t = 1; t <= 10; ++t) {
    const double eps = 0.1 * t;
    const auto cut = dendro.cut(eps);
    EXPECT_TRUE(cut.same_partition(rac_cluster(x, eps))) << eps;
    EXPECT_EQ(cut.num_clusters(), dendro.num_clusters_at(eps));
    EXPECT_LE(max_intra_distance(x, cut), eps);
    if (previous) {
      EXPECT_TRUE(previous->refines(cut));
      EXPECT_LE(cut.num_clusters(), previous->num_clusters());
    }
    previous = cut;
  }
  EXPECT_THROW(dendro.cut(1.5), ValidationError);
}

TEST(Rac, MatchesNaiveCompleteLinkage) {
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    const std::size_t n = 40 + 15 * seed;
    const auto x = test_util::unit_rows(test_util::gaussian_matrix(n, 3 + seed % 4, 100 + seed));
    for (double eps : {0.05, 0.2, 0.6, 1.5}) {
      const auto got = rac_cluster(x, eps);
      const auto want = from_oracle(testkit::oracle_complete_linkage(x, eps));
      EXPECT_TRUE(got.same_partition(want)) << "seed " << seed << " eps " << eps;
    }
  }
}

TEST(Rac, PruningIsLossless) {
  const auto x = test_util::unit_rows(test_util::gaussian_matrix(2000, 8, 4));
  RacOptions pruned;
  pruned.coordinate_pruning = true;
  EXPECT_EQ(build_dendrogram(x, 0.5), build_dendrogram(x, 0.5, pruned));
}

TEST(Rac, DuplicatesShareACluster) {
  auto x = test_util::gaussian_matrix(200, 5, 5);
  for (std::size_t i = 0; i < 20; ++i) {
    for (std::size_t j = 0; j < 5; ++j) x.row(100 + i)[j] = x.row(i)[j];
  }
  const auto c = rac_cluster(x, 1e-9);
  for (std::size_t i = 0; i < 20; ++i) EXPECT_EQ(c.cluster_of(i), c.cluster_of(100 + i));
  EXPECT_EQ(c.num_clusters(), 180u);
}

TEST(Rac, ThreadCountDoesNotChangeTheDendrogram) {
  const auto x = test_util::unit_rows(test_util::gaussian_matrix(3000, 8, 6));
  const unsigned saved = thread_count();
  set_thread_count(1);
  const auto a = build_dendrogram(x, 0.6);
  set_thread_count(4);
  const auto b = build_dendrogram(x, 0.6);
  set_thread_count(saved);
  EXPECT_EQ(a, b);
}

TEST(EpsilonSweep, PicksLargestSufficientEpsilon) {
  // 150 points: 30 merges at 0.15 and 40 more at 0.25 give counts {150, 120, 80}.
  Dendrogram d;
  d.num_points = 150;
  d.epsilon_max = 0.3;
  for (std::uint32_t i = 0; i < 30; ++i) d.merges.push_back({2 * i, 2 * i + 1, 0.15});
  for (std::uint32_t i = 30; i < 70; ++i) d.merges.push_back({2 * i, 2 * i + 1, 0.25});
  const EpsilonGrid grid({0.1, 0.2, 0.3});
  EXPECT_EQ(d.num_clusters_at(0.1), 150u);
  EXPECT_EQ(d.num_clusters_at(0.2), 120u);
  EXPECT_EQ(d.num_clusters_at(0.3), 80u);
  const auto choice = epsilon_sweep(d, grid, 100);
  EXPECT_EQ(choice.epsilon, 0.2);
  EXPECT_EQ(choice.clustering.num_clusters(), 120u);
  EXPECT_EQ(epsilon_sweep(d, grid, 150).epsilon, 0.1);
  EXPECT_THROW(epsilon_sweep(d, grid, 151), InfeasibleError);
  EXPECT_THROW(epsilon_sweep(d, EpsilonGrid({0.1, 0.4}), 10), ValidationError);
}

TEST(DendrogramFile, RoundTripAndCorruption) {
  test_util::TempDir dir;
  const auto x = test_util::unit_rows(test_util::gaussian_matrix(300, 4, 7));
  const auto d = build_dendrogram(x, 0.8);
  save_dendrogram(dir / "d.dnd", d);
  EXPECT_EQ(load_dendrogram(dir / "d.dnd"), d);
  {
    std::ofstream out(dir / "t.dnd", std::ios::binary);
    out << "DND1";
  }
  EXPECT_THROW(load_dendrogram(dir / "t.dnd"), FormatError);
}

TEST(DefaultEpsilon, KnownTags) {
  EXPECT_EQ(default_epsilon_for("use"), 0.2);
  EXPECT_EQ(default_epsilon_for("gecko"), 0.2);
  EXPECT_EQ(default_epsilon_for("bert"), 0.001);
  EXPECT_EQ(default_epsilon_for("lm-token-embeds"), 0.001);
  EXPECT_EQ(default_epsilon_for("lm-output-embeds"), 0.03);
  EXPECT_EQ(default_epsilon_for("unknown"), 0.0);
}
