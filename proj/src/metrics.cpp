#include "embcurate/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "embcurate/error.hpp"
#include "embcurate/parallel.hpp"
#include "embcurate/rng.hpp"

namespace embcurate {

const char* to_string(VrStatus status) {
  switch (status) {
    case VrStatus::kOk:
      return "ok";
    case VrStatus::kConstantLoss:
      return "degenerate: constant loss";
    case VrStatus::kZeroWithin:
      return "all clusters loss-constant";
  }
  return "unknown";
}

namespace {

// Neumaier-compensated sum.
class CompensatedSum {
 public:
  void add(double v) {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v)) {
      carry_ += (sum_ - t) + v;
    } else {
      carry_ += (v - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + carry_; }

 private:
  double sum_ = 0.0;
  double carry_ = 0.0;
};

double population_variance(std::span<const double> values, std::span<const std::size_t> index) {
  // A loss-constant group has variance exactly zero; the mean of n equal values
  // can be off by an ulp, which would otherwise leave a spurious residue.
  bool constant = true;
  for (auto i : index) {
    if (values[i] != values[index.front()]) {
      constant = false;
      break;
    }
  }
  if (constant) return 0.0;
  CompensatedSum s;
  for (auto i : index) s.add(values[i]);
  const double mean = s.value() / static_cast<double>(index.size());
  CompensatedSum sq;
  for (auto i : index) {
    const double c = values[i] - mean;
    sq.add(c * c);
  }
  return sq.value() / static_cast<double>(index.size());
}

std::vector<std::size_t> sampled_clusters(std::size_t m, const ClusterSampling& sampling) {
  std::vector<std::size_t> ids(m);
  for (std::size_t c = 0; c < m; ++c) ids[c] = c;
  if (sampling.max_clusters == 0 || sampling.max_clusters >= m) return ids;
  Rng rng(sampling.seed);
  for (std::size_t i = 0; i < sampling.max_clusters; ++i) std::swap(ids[i], ids[i + rng.index(m - i)]);
  ids.resize(sampling.max_clusters);
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace

VarianceReduction variance_reduction(const Clustering& clustering, std::span<const double> losses,
                                     const ClusterSampling& sampling) {
  if (losses.size() != clustering.size()) {
    throw ValidationError("clustering covers " + std::to_string(clustering.size()) + " examples but the loss table has " +
                          std::to_string(losses.size()));
  }
  for (double v : losses) {
    if (!std::isfinite(v)) throw ValidationError("non-finite loss");
  }
  std::vector<std::size_t> all(losses.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const double total = population_variance(losses, all);
  if (!(total > 0.0)) return {VrStatus::kConstantLoss, std::numeric_limits<double>::quiet_NaN()};

  const auto members = clustering.members();
  const auto chosen = sampled_clusters(clustering.num_clusters(), sampling);
  std::vector<double> within(chosen.size());
  parallel_for(0, chosen.size(), 4096, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t k = lo; k < hi; ++k) within[k] = population_variance(losses, members.of(chosen[k]));
  });
  CompensatedSum acc;
  for (double w : within) acc.add(w);
  const double mean_within = acc.value() / static_cast<double>(chosen.size());
  if (!(mean_within > 0.0)) return {VrStatus::kZeroWithin, std::numeric_limits<double>::infinity()};
  return {VrStatus::kOk, total / mean_within};
}

double cluster_purity(const Clustering& clustering, std::span<const std::uint32_t> sources) {
  if (sources.size() != clustering.size()) {
    throw ValidationError("clustering covers " + std::to_string(clustering.size()) + " examples but " +
                          std::to_string(sources.size()) + " source labels were given");
  }
  const auto members = clustering.members();
  // Terms and their sum are kept in extended precision and rounded once, so
  // simple fractions such as (2/3 + 1) / 2 come out as the nearest double.
  std::vector<long double> purity(clustering.num_clusters());
  parallel_for(0, clustering.num_clusters(), 4096, [&](std::size_t lo, std::size_t hi) {
    std::vector<std::uint32_t> labels;
    for (std::size_t c = lo; c < hi; ++c) {
      const auto idx = members.of(c);
      labels.clear();
      for (auto i : idx) labels.push_back(sources[i]);
      std::sort(labels.begin(), labels.end());
      std::size_t best = 0;
      for (std::size_t a = 0; a < labels.size();) {
        std::size_t b = a;
        while (b < labels.size() && labels[b] == labels[a]) ++b;
        best = std::max(best, b - a);
        a = b;
      }
      purity[c] = static_cast<long double>(best) / static_cast<long double>(idx.size());
    }
  });
  long double sum = 0.0L, carry = 0.0L;
  for (long double p : purity) {
    const long double t = sum + p;
    carry += std::abs(sum) >= std::abs(p) ? (sum - t) + p : (p - t) + sum;
    sum = t;
  }
  return static_cast<double>((sum + carry) / static_cast<long double>(purity.size()));
}

std::vector<std::size_t> size_histogram(const Clustering& clustering) {
  std::vector<std::size_t> hist;
  for (auto s : clustering.cluster_sizes()) {
    std::size_t b = 0;
    while ((std::size_t{2} << b) <= s) ++b;
    if (hist.size() <= b) hist.resize(b + 1, 0);
    ++hist[b];
  }
  return hist;
}

MetricsReport checkpoint_sweep(std::span<const Clustering> clusterings, std::span<const LossTable> loss_tables,
                               const std::string& model, std::span<const std::uint32_t> sources,
                               const ClusterSampling& sampling) {
  MetricsReport report;
  for (const auto& clustering : clusterings) {
    std::optional<double> purity;
    if (!sources.empty()) purity = cluster_purity(clustering, sources);
    const auto hist = size_histogram(clustering);
    std::vector<const LossTable*> ordered;
    for (const auto& t : loss_tables) ordered.push_back(&t);
    std::stable_sort(ordered.begin(), ordered.end(), [](auto* a, auto* b) { return a->step < b->step; });
    for (const LossTable* table : ordered) {
      MetricsRow row;
      row.model = model;
      row.avg_size_or_eps = clustering.provenance().parameter;
      row.step = table->step;
      row.variance_reduction = variance_reduction(clustering, table->values, sampling);
      row.purity = purity;
      row.num_clusters = clustering.num_clusters();
      row.size_histogram = hist;
      report.rows.push_back(std::move(row));
    }
  }
  return report;
}

std::string format_number(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

void save_metrics_csv(const std::filesystem::path& path, const MetricsReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << "model,avg_size_or_eps,step,variance_reduction,purity,num_clusters\n";
  for (const auto& r : report.rows) {
    out << r.model << ',' << format_number(r.avg_size_or_eps) << ',' << r.step << ',';
    if (r.variance_reduction.ok()) out << format_number(r.variance_reduction.value);
    out << ',';
    if (r.purity) out << format_number(*r.purity);
    out << ',' << r.num_clusters << '\n';
  }
  if (!out) throw Error("failed writing " + path.string());
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

double parse_double(const std::string& s, const std::string& where) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw FormatError(where + ": bad number '" + s + "'");
  return v;
}

}  // namespace

MetricsReport load_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "model,avg_size_or_eps,step,variance_reduction,purity,num_clusters") {
    throw FormatError(path.string() + ": unexpected metrics header");
  }
  MetricsReport report;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    const auto f = split_csv(line);
    if (f.size() != 6) throw FormatError(where + ": expected 6 fields");
    MetricsRow row;
    row.model = f[0];
    row.avg_size_or_eps = parse_double(f[1], where);
    row.step = static_cast<std::int64_t>(parse_double(f[2], where));
    if (f[3].empty()) {
      row.variance_reduction = {VrStatus::kZeroWithin, std::numeric_limits<double>::quiet_NaN()};
    } else {
      row.variance_reduction = {VrStatus::kOk, parse_double(f[3], where)};
    }
    if (!f[4].empty()) row.purity = parse_double(f[4], where);
    row.num_clusters = static_cast<std::size_t>(parse_double(f[5], where));
    report.rows.push_back(std::move(row));
  }
  return report;
}

void save_metrics_json(const std::filesystem::path& path, const MetricsReport& report) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& r : report.rows) {
    nlohmann::ordered_json row;
    row["model"] = r.model;
    row["avg_size_or_eps"] = r.avg_size_or_eps;
    row["step"] = r.step;
    row["status"] = to_string(r.variance_reduction.status);
    row["variance_reduction"] = r.variance_reduction.ok() ? nlohmann::ordered_json(r.variance_reduction.value)
                                                          : nlohmann::ordered_json(nullptr);
    row["purity"] = r.purity ? nlohmann::ordered_json(*r.purity) : nlohmann::ordered_json(nullptr);
    row["num_clusters"] = r.num_clusters;
    row["size_histogram_log2"] = r.size_histogram;
    rows.push_back(std::move(row));
  }
  nlohmann::ordered_json doc;
  doc["rows"] = std::move(rows);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << doc.dump(2) << '\n';
}

}  // namespace embcurate
