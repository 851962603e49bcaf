#include <gtest/gtest.h>

#include "embcurate/clustering.hpp"
#include "embcurate/error.hpp"
#include "test_util.hpp"

using namespace embcurate;

TEST(ClusteringTest, ValidatesDenseNonEmptyIds) {
  EXPECT_THROW(Clustering({0, 2}, 2), ValidationError);
  EXPECT_THROW(Clustering({0, 0}, 2), ValidationError);
  EXPECT_THROW(Clustering({}, 0), ValidationError);
  const Clustering c({1, 0, 1}, 2);
  EXPECT_EQ(c.cluster_sizes(), (std::vector<std::size_t>{1, 2}));
  const auto m = c.members();
  EXPECT_EQ(std::vector<std::size_t>(m.of(1).begin(), m.of(1).end()), (std::vector<std::size_t>{0, 2}));
}

TEST(ClusteringTest, FromLabelsIsCanonical) {
  const std::vector<std::uint64_t> labels{40, 7, 40, 3};
  const auto c = Clustering::from_labels(labels);
  EXPECT_EQ(c.assignments(), (std::vector<std::uint32_t>{0, 1, 0, 2}));
  EXPECT_TRUE(c.same_partition(Clustering({2, 0, 2, 1}, 3)));
  EXPECT_FALSE(c.same_partition(Clustering({0, 0, 0, 1}, 2)));
  EXPECT_TRUE(c.refines(Clustering({0, 0, 0, 1}, 2)));
  EXPECT_FALSE(Clustering({0, 0, 0, 1}, 2).refines(c));
}

TEST(ClusteringTest, CsvRoundTripWithIds) {
  test_util::TempDir dir;
  const Clustering c({0, 1, 1, 2, 0}, 3);
  const std::vector<std::uint64_t> ids{10, 11, 12, 13, 14};
  save_clustering_csv(dir / "c.csv", c, ids);
  const auto back = load_clustering_csv(dir / "c.csv", ids);
  EXPECT_EQ(back.assignments(), c.assignments());
  save_clustering_csv(dir / "plain.csv", c);
  EXPECT_EQ(load_clustering_csv(dir / "plain.csv").assignments(), c.assignments());
  EXPECT_THROW(load_clustering_csv(dir / "c.csv"), FormatError);
}
