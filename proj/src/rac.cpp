#include "embcurate/rac.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>

#include <Eigen/Dense>

#include "binary_io.hpp"
#include "embcurate/error.hpp"
#include "embcurate/parallel.hpp"

namespace embcurate {

EpsilonGrid::EpsilonGrid(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) throw ValidationError("epsilon grid is empty");
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!(values_[i] > 0.0) || !std::isfinite(values_[i])) throw ValidationError("epsilon values must be positive");
    if (i > 0 && !(values_[i] > values_[i - 1])) throw ValidationError("epsilon grid must be strictly ascending");
  }
}

namespace {

using RowMatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr std::size_t kRowBlock = 512;
constexpr std::size_t kColBlock = 2048;

struct Edge {
  std::uint32_t u;
  std::uint32_t v;
  double dist;
};

// All pairs with exact squared distance <= eps. Candidates are screened with
// a float Gram-matrix estimate plus a margin that dominates its rounding
// error, then confirmed with the double-accumulated distance.
std::vector<std::vector<std::pair<std::uint32_t, double>>> epsilon_graph(const EmbeddingMatrix& x, double eps,
                                                                        bool pruning) {
  const std::size_t n = x.rows();
  const std::size_t d = x.dim();

  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  if (pruning) {
    std::stable_sort(order.begin(), order.end(),
                     [&](std::uint32_t a, std::uint32_t b) { return x.row(a)[0] < x.row(b)[0]; });
  }
  RowMatrixF sorted(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  std::vector<float> norms(n);
  std::vector<float> lead(n);
  for (std::size_t p = 0; p < n; ++p) {
    const auto r = x.row(order[p]);
    std::copy(r.begin(), r.end(), sorted.row(static_cast<Eigen::Index>(p)).data());
    norms[p] = static_cast<float>(l2_norm(r) * l2_norm(r));
    lead[p] = r[0];
  }
  const double reach = std::sqrt(eps);

  const std::size_t blocks = (n + kRowBlock - 1) / kRowBlock;
  std::vector<std::vector<Edge>> found(blocks);
  parallel_for(0, blocks, 1, [&](std::size_t b0, std::size_t b1) {
    for (std::size_t b = b0; b < b1; ++b) {
      const std::size_t lo = b * kRowBlock;
      const std::size_t hi = std::min(n, lo + kRowBlock);
      std::size_t limit = n;
      if (pruning) {
        const double bound = static_cast<double>(lead[hi - 1]) + reach;
        limit = static_cast<std::size_t>(
            std::upper_bound(lead.begin() + static_cast<std::ptrdiff_t>(lo), lead.end(), bound,
                             [](double v, float e) { return v < static_cast<double>(e); }) -
            lead.begin());
      }
      auto rows = sorted.middleRows(static_cast<Eigen::Index>(lo), static_cast<Eigen::Index>(hi - lo));
      auto& out = found[b];
      for (std::size_t c0 = lo; c0 < limit; c0 += kColBlock) {
        const std::size_t c1 = std::min(limit, c0 + kColBlock);
        RowMatrixF g = rows * sorted.middleRows(static_cast<Eigen::Index>(c0), static_cast<Eigen::Index>(c1 - c0)).transpose();
        for (std::size_t p = lo; p < hi; ++p) {
          const float* gp = g.data() + (p - lo) * (c1 - c0);
          for (std::size_t q = std::max(c0, p + 1); q < c1; ++q) {
            const double approx = static_cast<double>(norms[p]) + norms[q] - 2.0 * gp[q - c0];
            const double margin = 1e-4 * (static_cast<double>(norms[p]) + norms[q]) + 1e-12;
            if (approx > eps + margin) continue;
            const std::uint32_t u = order[p];
            const std::uint32_t v = order[q];
            const double exact = squared_distance(x.row(u), x.row(v));
            if (exact <= eps) out.push_back({std::min(u, v), std::max(u, v), exact});
          }
        }
      }
    }
  });

  std::vector<std::vector<std::pair<std::uint32_t, double>>> adj(n);
  for (const auto& block : found) {
    for (const auto& e : block) {
      adj[e.u].emplace_back(e.v, e.dist);
      adj[e.v].emplace_back(e.u, e.dist);
    }
  }
  for (auto& list : adj) std::sort(list.begin(), list.end());
  return adj;
}

// Complete linkage restricted to pairs within epsilon_max: a link between two
// clusters is kept only while all |A|*|B| member pairs are within range, and
// then carries the maximum member distance.
struct Link {
  std::uint32_t other;
  std::uint64_t count;
  double dist;
};

class Agglomerator {
 public:
  Agglomerator(std::size_t n, std::vector<std::vector<std::pair<std::uint32_t, double>>> graph)
      : size_(n, 1), links_(n) {
    for (std::size_t i = 0; i < n; ++i) {
      links_[i].reserve(graph[i].size());
      for (auto [j, dist] : graph[i]) links_[i].push_back({j, 1, dist});
      graph[i] = {};
    }
    active_.resize(n);
    std::iota(active_.begin(), active_.end(), 0u);
  }

  std::vector<Merge> run() {
    std::vector<Merge> merges;
    constexpr std::uint32_t kNone = UINT32_MAX;
    std::vector<std::uint32_t> nn(size_.size(), kNone);
    for (;;) {
      parallel_for(0, active_.size(), 1024, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t a = lo; a < hi; ++a) {
          const std::uint32_t c = active_[a];
          std::uint32_t best = kNone;
          double best_dist = 0.0;
          for (const auto& l : links_[c]) {
            // Lists are sorted by `other`, so strict < keeps the lowest label on ties.
            if (best == kNone || l.dist < best_dist) {
              best = l.other;
              best_dist = l.dist;
            }
          }
          nn[c] = best;
        }
      });

      std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
      for (std::uint32_t c : active_) {
        const std::uint32_t e = nn[c];
        if (e != kNone && c < e && nn[e] == c) pairs.emplace_back(c, e);
      }
      if (pairs.empty()) break;
      for (auto [c, e] : pairs) merges.push_back(merge(c, e));

      std::erase_if(active_, [&](std::uint32_t c) { return size_[c] == 0; });
    }
    return merges;
  }

 private:
  static Link* find(std::vector<Link>& list, std::uint32_t other) {
    auto it = std::lower_bound(list.begin(), list.end(), other,
                               [](const Link& l, std::uint32_t o) { return l.other < o; });
    return (it != list.end() && it->other == other) ? &*it : nullptr;
  }

  static void erase(std::vector<Link>& list, std::uint32_t other) {
    auto it = std::lower_bound(list.begin(), list.end(), other,
                               [](const Link& l, std::uint32_t o) { return l.other < o; });
    if (it != list.end() && it->other == other) list.erase(it);
  }

  static void upsert(std::vector<Link>& list, const Link& link) {
    auto it = std::lower_bound(list.begin(), list.end(), link.other,
                               [](const Link& l, std::uint32_t o) { return l.other < o; });
    if (it != list.end() && it->other == link.other) {
      *it = link;
    } else {
      list.insert(it, link);
    }
  }

  Merge merge(std::uint32_t c, std::uint32_t e) {
    const double height = find(links_[c], e)->dist;
    const std::uint64_t merged_size = size_[c] + size_[e];
    std::vector<Link> merged;
    const auto& lc = links_[c];
    const auto& le = links_[e];
    std::vector<std::uint32_t> touched;
    touched.reserve(lc.size() + le.size());
    std::size_t i = 0, j = 0;
    while (i < lc.size() || j < le.size()) {
      if (j == le.size() || (i < lc.size() && lc[i].other < le[j].other)) {
        if (lc[i].other != e) touched.push_back(lc[i].other);
        ++i;
      } else if (i == lc.size() || le[j].other < lc[i].other) {
        if (le[j].other != c) touched.push_back(le[j].other);
        ++j;
      } else {
        const std::uint32_t k = lc[i].other;
        touched.push_back(k);
        const std::uint64_t count = lc[i].count + le[j].count;
        if (count == merged_size * size_[k]) merged.push_back({k, count, std::max(lc[i].dist, le[j].dist)});
        ++i;
        ++j;
      }
    }
    for (std::uint32_t k : touched) {
      auto& list = links_[k];
      erase(list, e);
      if (Link* kept = find(merged, k)) {
        upsert(list, {c, kept->count, kept->dist});
      } else {
        erase(list, c);
      }
    }
    links_[c] = std::move(merged);
    links_[e] = {};
    size_[c] = merged_size;
    size_[e] = 0;
    return {c, e, height};
  }

  std::vector<std::uint64_t> size_;
  std::vector<std::vector<Link>> links_;
  std::vector<std::uint32_t> active_;
};

std::uint32_t find_root(std::vector<std::uint32_t>& parent, std::uint32_t i) {
  while (parent[i] != i) {
    parent[i] = parent[parent[i]];
    i = parent[i];
  }
  return i;
}

}  // namespace

Dendrogram build_dendrogram(const EmbeddingMatrix& x, double epsilon_max, const RacOptions& options) {
  if (!(epsilon_max > 0.0) || !std::isfinite(epsilon_max)) throw ValidationError("epsilon_max must be positive");
  if (x.rows() > UINT32_MAX - 1) throw ValidationError("too many points for a dendrogram");
  Dendrogram dendro;
  dendro.num_points = x.rows();
  dendro.epsilon_max = epsilon_max;
  Agglomerator agg(x.rows(), epsilon_graph(x, epsilon_max, options.coordinate_pruning));
  dendro.merges = agg.run();
  std::stable_sort(dendro.merges.begin(), dendro.merges.end(),
                   [](const Merge& a, const Merge& b) { return a.height < b.height; });
  return dendro;
}

Clustering Dendrogram::cut(double epsilon) const {
  if (num_points == 0) throw ValidationError("empty dendrogram");
  if (epsilon > epsilon_max) {
    throw ValidationError("cannot cut at " + std::to_string(epsilon) + " above epsilon_max " +
                          std::to_string(epsilon_max));
  }
  std::vector<std::uint32_t> parent(num_points);
  std::iota(parent.begin(), parent.end(), 0u);
  for (const auto& m : merges) {
    if (m.height > epsilon) break;
    const auto ra = find_root(parent, m.a);
    const auto rb = find_root(parent, m.b);
    parent[std::max(ra, rb)] = std::min(ra, rb);
  }
  std::vector<std::uint64_t> labels(num_points);
  for (std::size_t i = 0; i < num_points; ++i) labels[i] = find_root(parent, static_cast<std::uint32_t>(i));
  return Clustering::from_labels(labels, Provenance{"rac", epsilon, 0});
}

std::size_t Dendrogram::num_clusters_at(double epsilon) const {
  const auto applied = std::upper_bound(merges.begin(), merges.end(), epsilon,
                                        [](double e, const Merge& m) { return e < m.height; }) -
                       merges.begin();
  return num_points - static_cast<std::size_t>(applied);
}

Clustering rac_cluster(const EmbeddingMatrix& x, double epsilon, const RacOptions& options) {
  return build_dendrogram(x, epsilon, options).cut(epsilon);
}

EpsilonChoice epsilon_sweep(const Dendrogram& dendrogram, const EpsilonGrid& grid, std::size_t required_clusters) {
  if (required_clusters == 0) throw ValidationError("required_clusters must be positive");
  if (grid.max() > dendrogram.epsilon_max) {
    throw ValidationError("epsilon grid exceeds the dendrogram's epsilon_max " + std::to_string(dendrogram.epsilon_max));
  }
  const auto& values = grid.values();
  for (auto it = values.rbegin(); it != values.rend(); ++it) {
    if (dendrogram.num_clusters_at(*it) >= required_clusters) return {*it, dendrogram.cut(*it)};
  }
  throw InfeasibleError("no epsilon in the grid yields at least " + std::to_string(required_clusters) +
                        " clusters (smallest epsilon gives " + std::to_string(dendrogram.num_clusters_at(values.front())) +
                        ")");
}

void save_dendrogram(const std::filesystem::path& path, const Dendrogram& dendrogram) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  detail::write_magic(out, "DND1");
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(dendrogram.num_points));
  detail::write_le<double>(out, dendrogram.epsilon_max);
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(dendrogram.merges.size()));
  for (const auto& m : dendrogram.merges) {
    detail::write_le(out, m.a);
    detail::write_le(out, m.b);
    detail::write_le(out, m.height);
  }
  if (!out) throw Error("failed writing " + path.string());
}

Dendrogram load_dendrogram(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  detail::expect_magic(in, "DND1", path.string());
  Dendrogram d;
  d.num_points = detail::read_le<std::uint32_t>(in, "point count");
  d.epsilon_max = detail::read_le<double>(in, "epsilon_max");
  const auto count = detail::read_le<std::uint32_t>(in, "merge count");
  if (d.num_points == 0 || count >= d.num_points) {
    throw FormatError("malformed header in " + path.string() + ": " + std::to_string(count) + " merges for " +
                      std::to_string(d.num_points) + " points");
  }
  d.merges.resize(count);
  try {
    for (auto& m : d.merges) {
      m.a = detail::read_le<std::uint32_t>(in, "merge");
      m.b = detail::read_le<std::uint32_t>(in, "merge");
      m.height = detail::read_le<double>(in, "merge");
    }
  } catch (const FormatError&) {
    throw FormatError(path.string() + ": truncated payload");
  }
  for (const auto& m : d.merges) {
    if (m.a >= m.b || m.b >= d.num_points) throw FormatError(path.string() + ": invalid merge labels");
  }
  for (std::size_t i = 1; i < d.merges.size(); ++i) {
    if (d.merges[i].height < d.merges[i - 1].height) throw FormatError(path.string() + ": merge heights not sorted");
  }
  return d;
}

double default_epsilon_for(std::string_view model_tag) {
  std::string tag;
  for (char ch : model_tag) tag.push_back(ch == '-' ? '_' : static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
  if (tag == "use" || tag == "gecko") return 0.2;
  if (tag == "bert" || tag == "lm_token_embeds" || tag == "lm_token") return 0.001;
  if (tag == "lm_output_embeds" || tag == "lm_output") return 0.03;
  return 0.0;
}

}  // namespace embcurate
