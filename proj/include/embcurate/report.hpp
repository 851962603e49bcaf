#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "embcurate/metrics.hpp"

namespace embcurate {

struct ReportOptions {
  /// Cluster size whose rows feed the VR-vs-step figure; the sweep size
  /// closest to it is used when it is absent.
  double step_figure_size = 50.0;
};

struct ReportFiles {
  std::filesystem::path vr_vs_size_csv;
  std::filesystem::path vr_vs_step_csv;
  std::filesystem::path purity_csv;
  std::vector<std::filesystem::path> plots;
};

/// Writes the three figure tables and renders a plot for each.
///   vr_vs_avg_size.csv  model,avg_size,variance_reduction,flag  (final step)
///   vr_vs_step.csv      model,step,variance_reduction,flag      (one size)
///   purity.csv          model,purity                            (smallest size, final step)
/// Flagged VR cells are empty and carry the status in `flag`; plots skip them.
ReportFiles emit_report(const MetricsReport& report, const std::filesystem::path& out_dir,
                        const ReportOptions& options = {});

/// Regenerates the SVG plots from the CSVs already in `out_dir`.
std::vector<std::filesystem::path> render_plots(const std::filesystem::path& out_dir);

}  // namespace embcurate
