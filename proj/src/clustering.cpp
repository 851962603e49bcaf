#include "embcurate/clustering.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "embcurate/error.hpp"

namespace embcurate {

Clustering::Clustering(std::vector<std::uint32_t> assignments, std::size_t num_clusters,
                       Provenance provenance)
    : assignments_(std::move(assignments)), num_clusters_(num_clusters), provenance_(std::move(provenance)) {
  if (assignments_.empty()) throw ValidationError("clustering must cover at least one example");
  std::vector<char> seen(num_clusters_, 0);
  for (std::size_t i = 0; i < assignments_.size(); ++i) {
    if (assignments_[i] >= num_clusters_) {
      throw ValidationError("example " + std::to_string(i) + " has cluster id " +
                            std::to_string(assignments_[i]) + " outside [0, " +
                            std::to_string(num_clusters_) + ")");
    }
    seen[assignments_[i]] = 1;
  }
  for (std::size_t c = 0; c < num_clusters_; ++c) {
    if (!seen[c]) throw ValidationError("cluster " + std::to_string(c) + " is empty");
  }
}

Clustering Clustering::from_labels(std::span<const std::uint64_t> labels, Provenance provenance) {
  std::unordered_map<std::uint64_t, std::uint32_t> dense;
  std::vector<std::uint32_t> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto [it, inserted] = dense.try_emplace(labels[i], static_cast<std::uint32_t>(dense.size()));
    out[i] = it->second;
  }
  const std::size_t m = dense.size();
  return Clustering(std::move(out), m, std::move(provenance));
}

std::vector<std::size_t> Clustering::cluster_sizes() const {
  std::vector<std::size_t> sizes(num_clusters_, 0);
  for (auto c : assignments_) ++sizes[c];
  return sizes;
}

Clustering::Members Clustering::members() const {
  Members m;
  m.offsets.assign(num_clusters_ + 1, 0);
  for (auto c : assignments_) ++m.offsets[c + 1];
  for (std::size_t c = 0; c < num_clusters_; ++c) m.offsets[c + 1] += m.offsets[c];
  m.indices.resize(assignments_.size());
  std::vector<std::size_t> cursor(m.offsets.begin(), m.offsets.end() - 1);
  for (std::size_t i = 0; i < assignments_.size(); ++i) m.indices[cursor[assignments_[i]]++] = i;
  return m;
}

bool Clustering::same_partition(const Clustering& other) const {
  if (size() != other.size() || num_clusters_ != other.num_clusters_) return false;
  return refines(other) && other.refines(*this);
}

bool Clustering::refines(const Clustering& coarser) const {
  if (size() != coarser.size()) return false;
  constexpr std::uint32_t kUnset = UINT32_MAX;
  std::vector<std::uint32_t> image(num_clusters_, kUnset);
  for (std::size_t i = 0; i < assignments_.size(); ++i) {
    auto& target = image[assignments_[i]];
    if (target == kUnset) {
      target = coarser.assignments_[i];
    } else if (target != coarser.assignments_[i]) {
      return false;
    }
  }
  return true;
}

void save_clustering_csv(const std::filesystem::path& path, const Clustering& clustering,
                         std::span<const std::uint64_t> ids) {
  if (!ids.empty() && ids.size() != clustering.size()) {
    throw ValidationError("clustering covers " + std::to_string(clustering.size()) + " examples but " +
                          std::to_string(ids.size()) + " ids were given");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  std::string buffer = "example_id,cluster_id\n";
  for (std::size_t i = 0; i < clustering.size(); ++i) {
    buffer += std::to_string(ids.empty() ? i : ids[i]);
    buffer += ',';
    buffer += std::to_string(clustering.cluster_of(i));
    buffer += '\n';
  }
  out << buffer;
  if (!out) throw Error("failed writing " + path.string());
}

namespace {

std::uint64_t parse_u64(std::string_view field, const std::string& where) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw FormatError(where + ": expected a non-negative integer, got '" + std::string(field) + "'");
  }
  return v;
}

}  // namespace

Clustering load_clustering_csv(const std::filesystem::path& path, std::span<const std::uint64_t> ids) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || (line != "example_id,cluster_id" && line != "example_id,cluster_id\r")) {
    throw FormatError(path.string() + ": missing header 'example_id,cluster_id'");
  }
  std::unordered_map<std::uint64_t, std::size_t> position;
  if (!ids.empty()) {
    position.reserve(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) position.emplace(ids[i], i);
  }
  std::vector<std::pair<std::size_t, std::uint64_t>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (comma == std::string::npos) throw FormatError(where + ": expected two fields");
    const std::uint64_t example = parse_u64(std::string_view(line).substr(0, comma), where);
    const std::uint64_t cluster = parse_u64(std::string_view(line).substr(comma + 1), where);
    std::size_t row = example;
    if (!ids.empty()) {
      auto it = position.find(example);
      if (it == position.end()) throw FormatError(where + ": unknown example id " + std::to_string(example));
      row = it->second;
    }
    rows.emplace_back(row, cluster);
  }
  const std::size_t n = ids.empty() ? rows.size() : ids.size();
  if (rows.size() != n) {
    throw FormatError(path.string() + ": " + std::to_string(rows.size()) + " rows for " + std::to_string(n) +
                      " examples");
  }
  std::vector<std::uint64_t> labels(n);
  std::vector<char> seen(n, 0);
  for (auto [row, cluster] : rows) {
    if (row >= n) throw FormatError(path.string() + ": example id " + std::to_string(row) + " out of range");
    if (seen[row]) throw FormatError(path.string() + ": example listed twice");
    seen[row] = 1;
    labels[row] = cluster;
  }
  // Preserve stored ids when they are already dense; otherwise relabel.
  std::uint64_t max_label = 0;
  for (auto l : labels) max_label = std::max(max_label, l);
  std::vector<char> used(max_label + 1 <= n ? max_label + 1 : 0, 0);
  bool dense = max_label < n;
  if (dense) {
    for (auto l : labels) used[l] = 1;
    for (char u : used) dense = dense && u;
  }
  if (dense) {
    std::vector<std::uint32_t> assign(labels.begin(), labels.end());
    return Clustering(std::move(assign), max_label + 1);
  }
  return Clustering::from_labels(labels);
}

}  // namespace embcurate
