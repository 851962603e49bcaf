#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "embcurate/error.hpp"
#include "embcurate/report.hpp"
#include "test_util.hpp"

using namespace embcurate;

namespace {

std::vector<std::string> lines_of(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

MetricsReport sample_report() {
  MetricsReport r;
  for (const std::string model : {"alpha", "beta"}) {
    for (double size : {25.0, 50.0, 100.0, 150.0}) {
      for (std::int64_t step : {1000, 2000}) {
        MetricsRow row;
        row.model = model;
        row.avg_size_or_eps = size;
        row.step = step;
        row.variance_reduction = {VrStatus::kOk, 10.0 - size / 50.0 + step / 1000.0};
        row.purity = model == "alpha" ? 0.9 : 0.5;
        row.num_clusters = static_cast<std::size_t>(10000 / size);
        r.rows.push_back(row);
      }
    }
  }
  // one flagged cell at the final step
  r.rows[3].variance_reduction = {VrStatus::kZeroWithin, std::numeric_limits<double>::infinity()};
  MetricsRow random_row;
  random_row.model = "random";
  random_row.avg_size_or_eps = 25;
  random_row.step = 2000;
  random_row.variance_reduction = {VrStatus::kOk, 1.0};
  random_row.purity = 0.3;
  r.rows.push_back(random_row);
  return r;
}

}  // namespace

TEST(Report, FigureTables) {
  test_util::TempDir dir;
  const auto files = emit_report(sample_report(), dir.path());
  const auto size_rows = lines_of(files.vr_vs_size_csv);
  ASSERT_EQ(size_rows.size(), 1u + 8u + 1u);
  EXPECT_EQ(size_rows[0], "model,avg_size,variance_reduction,flag");
  EXPECT_EQ(size_rows[2], "alpha,50,,all clusters loss-constant");
  const auto step_rows = lines_of(files.vr_vs_step_csv);
  EXPECT_EQ(step_rows[0], "model,step,variance_reduction,flag");
  EXPECT_EQ(step_rows.size(), 1u + 2u + 2u);  // random has no size-50 row
  EXPECT_EQ(step_rows[1], "alpha,1000,10,");
  const auto purity_rows = lines_of(files.purity_csv);
  ASSERT_EQ(purity_rows.size(), 4u);
  EXPECT_EQ(purity_rows[0], "model,purity");
  EXPECT_EQ(purity_rows[1], "alpha,0.9");
  EXPECT_EQ(purity_rows[3], "random,0.3");
  ASSERT_EQ(files.plots.size(), 3u);
  for (const auto& p : files.plots) {
    EXPECT_EQ(p.extension(), ".svg");
    EXPECT_NE(slurp(p).find("<svg"), std::string::npos);
  }
  // bar chart: one bar per model
  const auto purity_svg = slurp(dir / "purity.svg");
  std::size_t bars = 0;
  for (auto pos = purity_svg.find("class=\"bar\""); pos != std::string::npos; pos = purity_svg.find("class=\"bar\"", pos + 1)) ++bars;
  EXPECT_EQ(bars, 3u);
}

TEST(Report, ReplotIsIdentical) {
  test_util::TempDir dir;
  const auto files = emit_report(sample_report(), dir.path());
  std::vector<std::string> before;
  for (const auto& p : files.plots) before.push_back(slurp(p));
  for (const auto& p : files.plots) std::filesystem::remove(p);
  const auto again = render_plots(dir.path());
  ASSERT_EQ(again.size(), before.size());
  for (std::size_t i = 0; i < again.size(); ++i) EXPECT_EQ(slurp(again[i]), before[i]);
}

TEST(Report, EmptyReportIsRejected) {
  test_util::TempDir dir;
  EXPECT_THROW(emit_report(MetricsReport{}, dir.path()), ValidationError);
}
