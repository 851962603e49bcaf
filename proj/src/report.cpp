#include "embcurate/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "embcurate/error.hpp"

namespace embcurate {

namespace {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

Table read_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  Table t;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
      if (c == ',') {
        fields.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    fields.push_back(cur);
    if (first) {
      t.header = std::move(fields);
      first = false;
    } else {
      if (fields.size() != t.header.size()) throw FormatError(path.string() + ": ragged row");
      t.rows.push_back(std::move(fields));
    }
  }
  return t;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

std::optional<double> cell_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

constexpr double kW = 640, kH = 420, kLeft = 70, kRight = 170, kTop = 40, kBottom = 60;

struct Range {
  double lo = 0.0, hi = 1.0;
};

Range padded(double lo, double hi, bool from_zero) {
  if (from_zero) lo = std::min(lo, 0.0);
  if (!(hi > lo)) {
    hi = lo + 1.0;
  }
  const double pad = 0.05 * (hi - lo);
  return {from_zero && lo >= 0.0 ? lo : lo - pad, hi + pad};
}

std::string frame(const std::string& title, const std::string& xlabel, const std::string& ylabel, Range xr, Range yr,
                  const std::vector<double>& xticks) {
  std::ostringstream s;
  const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << kW / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << escape_xml(title) << "</text>\n";
  s << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << pw << "\" height=\"" << ph << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = yr.lo + (yr.hi - yr.lo) * i / 4.0;
    const double y = kTop + ph - ph * i / 4.0;
    s << "<line x1=\"" << kLeft - 4 << "\" y1=\"" << fmt(y) << "\" x2=\"" << kLeft << "\" y2=\"" << fmt(y) << "\" stroke=\"black\"/>\n";
    s << "<text x=\"" << kLeft - 8 << "\" y=\"" << fmt(y + 4) << "\" text-anchor=\"end\">" << tick_label(std::round(v * 1000) / 1000) << "</text>\n";
  }
  for (double v : xticks) {
    const double x = kLeft + pw * (v - xr.lo) / (xr.hi - xr.lo);
    s << "<line x1=\"" << fmt(x) << "\" y1=\"" << kTop + ph << "\" x2=\"" << fmt(x) << "\" y2=\"" << kTop + ph + 4 << "\" stroke=\"black\"/>\n";
    s << "<text x=\"" << fmt(x) << "\" y=\"" << kTop + ph + 18 << "\" text-anchor=\"middle\">" << tick_label(v) << "</text>\n";
  }
  s << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kH - 15 << "\" text-anchor=\"middle\">" << escape_xml(xlabel) << "</text>\n";
  s << "<text transform=\"translate(18," << kTop + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">" << escape_xml(ylabel) << "</text>\n";
  return s.str();
}

// Line chart with one series per model. Rows: model, x, y (may be empty).
std::string line_chart(const Table& t, const std::string& title, const std::string& xlabel, const std::string& ylabel) {
  std::vector<std::string> models;
  std::map<std::string, std::vector<std::pair<double, double>>> series;
  std::set<double> xs;
  double ylo = std::numeric_limits<double>::infinity(), yhi = -ylo;
  for (const auto& r : t.rows) {
    if (std::find(models.begin(), models.end(), r[0]) == models.end()) models.push_back(r[0]);
    const auto x = cell_number(r[1]);
    const auto y = cell_number(r[2]);
    if (!x || !y) continue;
    series[r[0]].emplace_back(*x, *y);
    xs.insert(*x);
    ylo = std::min(ylo, *y);
    yhi = std::max(yhi, *y);
  }
  if (xs.empty()) {
    ylo = 0.0;
    yhi = 1.0;
  }
  const Range xr = xs.empty() ? Range{0, 1} : padded(*xs.begin(), *xs.rbegin(), false);
  const Range yr = padded(ylo, yhi, true);
  std::ostringstream s;
  s << frame(title, xlabel, ylabel, xr, yr, std::vector<double>(xs.begin(), xs.end()));
  const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  auto px = [&](double x) { return kLeft + pw * (x - xr.lo) / (xr.hi - xr.lo); };
  auto py = [&](double y) { return kTop + ph - ph * (y - yr.lo) / (yr.hi - yr.lo); };
  for (std::size_t m = 0; m < models.size(); ++m) {
    const char* color = kPalette[m % 8];
    auto pts = series[models[m]];
    std::sort(pts.begin(), pts.end());
    if (pts.size() > 1) {
      s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
      for (std::size_t i = 0; i < pts.size(); ++i) s << (i ? " " : "") << fmt(px(pts[i].first)) << "," << fmt(py(pts[i].second));
      s << "\"/>\n";
    }
    for (const auto& [x, y] : pts) {
      s << "<circle cx=\"" << fmt(px(x)) << "\" cy=\"" << fmt(py(y)) << "\" r=\"3.5\" fill=\"" << color << "\"/>\n";
    }
    const double ly = kTop + 10 + 18.0 * static_cast<double>(m);
    s << "<rect x=\"" << kW - kRight + 15 << "\" y=\"" << fmt(ly - 8) << "\" width=\"12\" height=\"12\" fill=\"" << color << "\"/>\n";
    s << "<text x=\"" << kW - kRight + 32 << "\" y=\"" << fmt(ly + 2) << "\">" << escape_xml(models[m]) << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

std::string bar_chart(const Table& t, const std::string& title, const std::string& ylabel) {
  std::vector<std::pair<std::string, double>> bars;
  double hi = 1.0;
  for (const auto& r : t.rows) {
    const auto v = cell_number(r[1]);
    if (!v) continue;
    bars.emplace_back(r[0], *v);
    hi = std::max(hi, *v);
  }
  const Range yr{0.0, hi * 1.05};
  std::ostringstream s;
  s << frame(title, "embedding model", ylabel, Range{0, 1}, yr, {});
  const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  const double slot = bars.empty() ? pw : pw / static_cast<double>(bars.size());
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const double h = ph * bars[i].second / yr.hi;
    const double x = kLeft + slot * static_cast<double>(i) + slot * 0.15;
    s << "<rect class=\"bar\" x=\"" << fmt(x) << "\" y=\"" << fmt(kTop + ph - h) << "\" width=\"" << fmt(slot * 0.7) << "\" height=\"" << fmt(h)
      << "\" fill=\"" << kPalette[i % 8] << "\"/>\n";
    s << "<text x=\"" << fmt(x + slot * 0.35) << "\" y=\"" << kTop + ph + 18 << "\" text-anchor=\"middle\">" << escape_xml(bars[i].first) << "</text>\n";
    s << "<text x=\"" << fmt(x + slot * 0.35) << "\" y=\"" << fmt(kTop + ph - h - 5) << "\" text-anchor=\"middle\">" << tick_label(std::round(bars[i].second * 1000) / 1000) << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

const char* flag_of(const VarianceReduction& vr) { return vr.ok() ? "" : to_string(vr.status); }

}  // namespace

std::vector<std::filesystem::path> render_plots(const std::filesystem::path& out_dir) {
  std::vector<std::filesystem::path> out;
  const auto size_csv = out_dir / "vr_vs_avg_size.csv";
  const auto step_csv = out_dir / "vr_vs_step.csv";
  const auto purity_csv = out_dir / "purity.csv";
  if (std::filesystem::exists(size_csv)) {
    out.push_back(out_dir / "vr_vs_avg_size.svg");
    write_text(out.back(), line_chart(read_table(size_csv), "Variance reduction vs average cluster size",
                                      "average cluster size", "variance reduction"));
  }
  if (std::filesystem::exists(step_csv)) {
    out.push_back(out_dir / "vr_vs_step.svg");
    write_text(out.back(), line_chart(read_table(step_csv), "Variance reduction vs training step", "checkpoint step",
                                      "variance reduction"));
  }
  if (std::filesystem::exists(purity_csv)) {
    out.push_back(out_dir / "purity.svg");
    write_text(out.back(), bar_chart(read_table(purity_csv), "Cluster purity by data source", "purity"));
  }
  return out;
}

ReportFiles emit_report(const MetricsReport& report, const std::filesystem::path& out_dir,
                        const ReportOptions& options) {
  if (report.rows.empty()) throw ValidationError("cannot emit a report from an empty metrics report");
  std::filesystem::create_directories(out_dir);

  std::int64_t final_step = report.rows.front().step;
  std::set<double> sizes;
  std::vector<std::string> models;
  for (const auto& r : report.rows) {
    final_step = std::max(final_step, r.step);
    sizes.insert(r.avg_size_or_eps);
    if (std::find(models.begin(), models.end(), r.model) == models.end()) models.push_back(r.model);
  }
  double step_size = *sizes.begin();
  for (double s : sizes) {
    if (std::abs(s - options.step_figure_size) < std::abs(step_size - options.step_figure_size)) step_size = s;
  }
  const double smallest = *sizes.begin();

  ReportFiles files;
  files.vr_vs_size_csv = out_dir / "vr_vs_avg_size.csv";
  files.vr_vs_step_csv = out_dir / "vr_vs_step.csv";
  files.purity_csv = out_dir / "purity.csv";

  std::ostringstream by_size, by_step, purity;
  by_size << "model,avg_size,variance_reduction,flag\n";
  by_step << "model,step,variance_reduction,flag\n";
  purity << "model,purity\n";
  for (const auto& model : models) {
    std::vector<const MetricsRow*> rows;
    for (const auto& r : report.rows)
      if (r.model == model) rows.push_back(&r);
    std::stable_sort(rows.begin(), rows.end(), [](const MetricsRow* a, const MetricsRow* b) {
      if (a->avg_size_or_eps != b->avg_size_or_eps) return a->avg_size_or_eps < b->avg_size_or_eps;
      return a->step < b->step;
    });
    bool purity_done = false;
    for (const auto* r : rows) {
      const auto& vr = r->variance_reduction;
      const std::string cell = vr.ok() ? format_number(vr.value) : "";
      if (r->step == final_step) {
        by_size << model << ',' << format_number(r->avg_size_or_eps) << ',' << cell << ',' << flag_of(vr) << '\n';
      }
      if (r->avg_size_or_eps == step_size) {
        by_step << model << ',' << r->step << ',' << cell << ',' << flag_of(vr) << '\n';
      }
      if (!purity_done && r->avg_size_or_eps == smallest && r->step == final_step && r->purity) {
        purity << model << ',' << format_number(*r->purity) << '\n';
        purity_done = true;
      }
    }
  }
  write_text(files.vr_vs_size_csv, by_size.str());
  write_text(files.vr_vs_step_csv, by_step.str());
  write_text(files.purity_csv, purity.str());
  files.plots = render_plots(out_dir);
  return files;
}

}  // namespace embcurate
