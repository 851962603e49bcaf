#include <cmath>
#include <fstream>

#include <gtest/gtest.h>

#include "embcurate/error.hpp"
#include "embcurate/metrics.hpp"
#include "embcurate/parallel.hpp"
#include "embcurate/testkit.hpp"
#include "test_util.hpp"

using namespace embcurate;

namespace {

Clustering labels_of(std::vector<std::uint64_t> labels) { return Clustering::from_labels(labels); }

std::vector<double> random_losses(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = 3.0 + rng.normal();
  return v;
}

}  // namespace

TEST(VarianceReduction, HandExample) {
  const std::vector<double> losses{0, 1, 10, 11};
  const auto vr = variance_reduction(labels_of({0, 0, 1, 1}), losses);
  ASSERT_TRUE(vr.ok());
  EXPECT_DOUBLE_EQ(vr.value, 101.0);
}

TEST(VarianceReduction, SingleClusterIsOne) {
  const auto losses = random_losses(300, 1);
  const auto vr = variance_reduction(labels_of(std::vector<std::uint64_t>(300, 7)), losses);
  EXPECT_NEAR(vr.value, 1.0, 1e-12);
}

TEST(VarianceReduction, MatchesPairwiseOracle) {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.index(999);
    const std::size_t m = 1 + rng.index(std::max<std::size_t>(1, n / 2));
    std::vector<std::uint64_t> raw(n);
    for (auto& l : raw) l = rng.index(m);
    const auto c = labels_of(raw);
    const auto losses = random_losses(n, 100 + trial);
    const auto vr = variance_reduction(c, losses);
    if (!vr.ok()) continue;
    const double want = testkit::oracle_variance_reduction(c.assignments(), losses);
    EXPECT_NEAR(vr.value, want, 1e-9 * want) << "trial " << trial;
  }
}

TEST(VarianceReduction, SingletonsCountWithZeroVariance) {
  // {0,1} variance 0.25 and a singleton: mean within = 0.125.
  const std::vector<double> losses{0, 1, 5};
  const auto vr = variance_reduction(labels_of({0, 0, 1}), losses);
  const double total = (0.0 + 1.0 + 25.0) / 3.0 - std::pow(2.0, 2);
  EXPECT_NEAR(vr.value, total / 0.125, 1e-12);
  EXPECT_NEAR(vr.value, testkit::oracle_variance_reduction(std::vector<std::uint32_t>{0, 0, 1}, losses), 1e-12);
}

TEST(VarianceReduction, InvariantUnderRelabelAndAffineMaps) {
  const std::size_t n = 500;
  Rng rng(3);
  std::vector<std::uint64_t> raw(n), relabeled(n);
  for (std::size_t i = 0; i < n; ++i) {
    raw[i] = rng.index(40);
    relabeled[i] = 1000 - 7 * raw[i];
  }
  auto losses = random_losses(n, 4);
  const double base = variance_reduction(labels_of(raw), losses).value;
  EXPECT_NEAR(variance_reduction(labels_of(relabeled), losses).value, base, 1e-9 * base);
  for (double a : {-2.0, 0.5, 13.0}) {
    std::vector<double> mapped(n);
    for (std::size_t i = 0; i < n; ++i) mapped[i] = a * losses[i] - 4.0;
    EXPECT_NEAR(variance_reduction(labels_of(raw), mapped).value, base, 1e-9 * base);
  }
}

TEST(VarianceReduction, DegenerateCasesAreFlagged) {
  const auto constant = variance_reduction(labels_of({0, 0, 1, 1}), std::vector<double>{2, 2, 2, 2});
  EXPECT_EQ(constant.status, VrStatus::kConstantLoss);
  EXPECT_TRUE(std::isnan(constant.value));
  const auto zero = variance_reduction(labels_of({0, 0, 1, 1}), std::vector<double>{1, 1, 3, 3});
  EXPECT_EQ(zero.status, VrStatus::kZeroWithin);
  EXPECT_TRUE(std::isinf(zero.value));
  EXPECT_THROW(variance_reduction(labels_of({0, 1}), std::vector<double>{1, 2, 3}), ValidationError);
  EXPECT_THROW(variance_reduction(labels_of({0, 1}), std::vector<double>{1, NAN}), ValidationError);
}

TEST(VarianceReduction, RandomClusteringNearOne) {
  double sum = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto losses = random_losses(20000, seed);
    sum += variance_reduction(testkit::random_clustering(20000, 50, seed + 10), losses).value;
  }
  EXPECT_NEAR(sum / 5, 1.0, 0.05);
}

TEST(VarianceReduction, ThreadAndSamplingBehaviour) {
  const std::size_t n = 40000;
  const auto losses = random_losses(n, 5);
  const auto c = testkit::random_clustering(n, 5, 6);
  const unsigned saved = thread_count();
  set_thread_count(1);
  const auto a = variance_reduction(c, losses);
  set_thread_count(4);
  const auto b = variance_reduction(c, losses);
  set_thread_count(saved);
  EXPECT_EQ(a.value, b.value);
  const ClusterSampling s{1000, 3};
  const auto sampled = variance_reduction(c, losses, s);
  EXPECT_EQ(sampled.value, variance_reduction(c, losses, s).value);
  EXPECT_NE(sampled.value, a.value);
  EXPECT_NEAR(sampled.value, a.value, 0.1 * a.value);
}

TEST(Purity, Examples) {
  const std::vector<std::uint32_t> s{0, 0, 1, 1, 1, 1};
  EXPECT_NEAR(cluster_purity(labels_of({0, 0, 0, 1, 1, 1}), s), 5.0 / 6.0, 1e-15);
  EXPECT_EQ(cluster_purity(labels_of({0, 1, 2, 3, 4, 5}), s), 1.0);
  EXPECT_EQ(cluster_purity(labels_of({0, 0, 1, 1, 2, 2}), std::vector<std::uint32_t>(6, 3)), 1.0);
  EXPECT_THROW(cluster_purity(labels_of({0, 0}), s), ValidationError);
}

TEST(Purity, BoundsAndSourcePermutation) {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2000;
    const std::uint32_t S = 2 + static_cast<std::uint32_t>(rng.index(10));
    std::vector<std::uint32_t> sources(n);
    for (auto& v : sources) v = static_cast<std::uint32_t>(rng.index(S));
    const auto c = testkit::random_clustering(n, 1 + rng.index(100), trial);
    const double p = cluster_purity(c, sources);
    EXPECT_GE(p, 1.0 / S);
    EXPECT_LE(p, 1.0);
    // a bijective relabeling of sources
    std::vector<std::uint32_t> flipped(n);
    for (std::size_t i = 0; i < n; ++i) flipped[i] = S - 1 - sources[i];
    EXPECT_NEAR(cluster_purity(c, flipped), p, 1e-15);
  }
}

TEST(Histogram, PowerOfTwoBuckets) {
  const auto h = size_histogram(labels_of({0, 1, 1, 2, 2, 2, 3, 3, 3, 3}));
  ASSERT_EQ(h.size(), 3u);
  EXPECT_EQ(h[0], 1u);  // size 1
  EXPECT_EQ(h[1], 2u);  // sizes 2, 3
  EXPECT_EQ(h[2], 1u);  // size 4
}

TEST(CheckpointSweep, RowsAndFlags) {
  const std::size_t n = 400;
  std::vector<Clustering> cs;
  for (std::size_t s : {25, 50, 100, 150}) cs.push_back(testkit::random_clustering(n, s, s));
  std::vector<LossTable> tables{{100, random_losses(n, 1)}, {200, std::vector<double>(n, 1.0)}, {300, random_losses(n, 2)}};
  std::vector<std::uint32_t> sources(n);
  for (std::size_t i = 0; i < n; ++i) sources[i] = i % 3;
  const auto one = checkpoint_sweep(std::span(cs).first(1), tables, "m");
  ASSERT_EQ(one.rows.size(), 3u);
  EXPECT_EQ(one.rows[1].variance_reduction.status, VrStatus::kConstantLoss);
  EXPECT_TRUE(one.rows[0].variance_reduction.ok());
  EXPECT_TRUE(one.rows[2].variance_reduction.ok());
  EXPECT_FALSE(one.rows[0].purity.has_value());

  const auto four = checkpoint_sweep(cs, std::span(tables).first(1), "m", sources);
  ASSERT_EQ(four.rows.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(four.rows[i].num_clusters, cs[i].num_clusters());
    EXPECT_TRUE(four.rows[i].purity.has_value());
  }
  EXPECT_EQ(four.rows[1].avg_size_or_eps, cs[1].provenance().parameter);

  const auto all = checkpoint_sweep(cs, tables, "m");
  ASSERT_EQ(all.rows.size(), 12u);
  for (std::size_t i = 0; i < 12; ++i) EXPECT_EQ(all.rows[i].step, tables[i % 3].step);
}

TEST(MetricsCsv, HeaderAndRoundTrip) {
  test_util::TempDir dir;
  MetricsReport r;
  r.rows.push_back({"use", 50, 2000, {VrStatus::kOk, 10.5}, 0.75, 200, {}});
  r.rows.push_back({"use", 50, 4000, {VrStatus::kConstantLoss, NAN}, std::nullopt, 200, {}});
  save_metrics_csv(dir / "m.csv", r);
  std::ifstream in(dir / "m.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "model,avg_size_or_eps,step,variance_reduction,purity,num_clusters");
  const auto back = load_metrics_csv(dir / "m.csv");
  ASSERT_EQ(back.rows.size(), 2u);
  EXPECT_EQ(back.rows[0].variance_reduction.value, 10.5);
  EXPECT_EQ(*back.rows[0].purity, 0.75);
  EXPECT_FALSE(back.rows[1].variance_reduction.ok());
  EXPECT_FALSE(back.rows[1].purity.has_value());
  EXPECT_EQ(back.rows[1].num_clusters, 200u);
  save_metrics_json(dir / "m.json", r);
  EXPECT_TRUE(std::filesystem::exists(dir / "m.json"));
}

TEST(FormatNumber, ShortestRoundTrip) {
  EXPECT_EQ(format_number(0.1), "0.1");
  EXPECT_EQ(format_number(50), "50");
  const double x = 1.0 / 3.0;
  EXPECT_EQ(std::stod(format_number(x)), x);
}
