#include "embcurate/balanced_kmeans.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include <Eigen/Dense>

#include "embcurate/error.hpp"
#include "embcurate/parallel.hpp"
#include "embcurate/rng.hpp"
#include "kernels.hpp"

namespace embcurate {

Ratio Ratio::parse(const std::string& text) {
  auto parse_uint = [&](std::string_view s) {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
      throw ValidationError("invalid ratio '" + text + "'");
    }
    return v;
  };
  Ratio r;
  if (auto slash = text.find('/'); slash != std::string::npos) {
    r.num = parse_uint(std::string_view(text).substr(0, slash));
    r.den = parse_uint(std::string_view(text).substr(slash + 1));
  } else if (auto dot = text.find('.'); dot != std::string::npos) {
    const auto whole = std::string_view(text).substr(0, dot);
    const auto frac = std::string_view(text).substr(dot + 1);
    if (frac.size() > 9) throw ValidationError("ratio '" + text + "' has too many decimals");
    r.den = 1;
    for (std::size_t i = 0; i < frac.size(); ++i) r.den *= 10;
    r.num = (whole.empty() ? 0 : parse_uint(whole)) * r.den + (frac.empty() ? 0 : parse_uint(frac));
  } else {
    r.num = parse_uint(text);
    r.den = 1;
  }
  if (r.den == 0) throw ValidationError("ratio '" + text + "' has a zero denominator");
  const auto g = std::gcd(r.num, r.den);
  if (g > 1) {
    r.num /= g;
    r.den /= g;
  }
  return r;
}

std::string Ratio::str() const { return den == 1 ? std::to_string(num) : std::to_string(num) + "/" + std::to_string(den); }

SizeBounds size_bounds(std::size_t n, const BalanceConfig& config) {
  const std::uint64_t avg = config.avg_size;
  if (avg == 0) throw ValidationError("avg_size must be positive");
  const Ratio lo = config.min_factor;
  const Ratio hi = config.max_factor;
  if (lo.num > lo.den) throw ValidationError("min_factor " + lo.str() + " exceeds 1");
  if (hi.num < hi.den) throw ValidationError("max_factor " + hi.str() + " is below 1");
  if (lo.num * avg < lo.den) throw ValidationError("min_factor * avg_size must be at least 1");
  if (n < avg) {
    throw InfeasibleError("n = " + std::to_string(n) + " is smaller than avg_size " + std::to_string(avg));
  }

  SizeBounds b;
  b.num_clusters = std::max<std::size_t>(1, (n + avg / 2) / avg);
  b.min_size = (lo.num * avg + lo.den - 1) / lo.den;
  b.max_size = (hi.num * avg) / hi.den;
  b.min_size = std::clamp<std::size_t>(b.min_size, 1, n);
  b.max_size = std::clamp<std::size_t>(b.max_size, 1, n);
  if (b.num_clusters * b.min_size > n || b.num_clusters * b.max_size < n) {
    throw InfeasibleError("infeasible size constraints: " + std::to_string(b.num_clusters) +
                          " clusters with sizes in [" + std::to_string(b.min_size) + ", " +
                          std::to_string(b.max_size) + "] cannot cover " + std::to_string(n) + " points");
  }
  return b;
}

namespace {

using RowMatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr std::size_t kBlockRows = 256;
constexpr std::size_t kChunk = 4096;

struct Top2 {
  std::vector<std::uint32_t> best;
  std::vector<float> margin;  // best score minus second-best score (<= 0)
};

class Solver {
 public:
  Solver(const EmbeddingMatrix& x, const BalanceConfig& config, const SizeBounds& bounds)
      : x_(x), config_(config), bounds_(bounds), n_(x.rows()), d_(x.dim()), m_(bounds.num_clusters),
        centroids_(m_ * d_, 0.0f) {}

  KmeansRun run() {
    KmeansRun result{Clustering(std::vector<std::uint32_t>(n_, 0), 1), {}, {}, 0, false, 0, {}};
    check_norms(result.warnings);

    std::vector<std::uint32_t> assign(n_, 0);
    if (m_ > 1) {
      seed_plus_plus();
      for (std::size_t iter = 0; iter < config_.max_iters; ++iter) {
        std::vector<std::uint32_t> next = capacity_assign();
        result.iterations = iter + 1;
        if (iter > 0) {
          if (next == assign) {
            result.converged = true;
            break;
          }
          // Keep the previous (feasible) assignment if the greedy step got worse.
          if (sse(next) > sse(assign)) {
            result.converged = true;
            break;
          }
        }
        assign = std::move(next);
        fill_empty_clusters(assign);
        update_centroids(assign);
        result.objective_history.push_back(sse(assign));
      }
      result.repaired_points = repair_min_sizes(assign);
      if (result.repaired_points > 0) update_centroids(assign);
    } else {
      update_centroids(assign);
      result.objective_history.push_back(sse(assign));
      result.converged = true;
    }

    result.clustering = Clustering(std::move(assign), m_,
                                   Provenance{"balanced-kmeans", static_cast<double>(config_.avg_size), config_.seed});
    result.centroids = centroids_;
    return result;
  }

 private:
  const float* point(std::size_t i) const { return x_.data() + i * d_; }
  float* centroid(std::size_t c) { return centroids_.data() + c * d_; }
  const float* centroid(std::size_t c) const { return centroids_.data() + c * d_; }

  void check_norms(std::vector<std::string>& warnings) const {
    std::size_t off = 0;
    for (std::size_t i = 0; i < n_; ++i) {
      if (std::abs(l2_norm(x_.row(i)) - 1.0) > 1e-3) ++off;
    }
    if (off > 0) {
      warnings.push_back(std::to_string(off) + " of " + std::to_string(n_) +
                         " rows are not unit-normalized; clustering uses raw squared L2");
    }
  }

  // Greedy k-means++: each step draws several D^2-weighted candidates and
  // keeps the one that lowers the seeding potential the most.
  void seed_plus_plus() {
    Rng rng(config_.seed);
    const std::size_t trials =
        config_.seeding_trials > 0 ? config_.seeding_trials
                                   : 2 + static_cast<std::size_t>(std::log(static_cast<double>(m_)));
    const std::size_t chunks = (n_ + kChunk - 1) / kChunk;

    std::vector<float> point_norms(n_);
    for (std::size_t i = 0; i < n_; ++i) point_norms[i] = detail::dot_f(point(i), point(i), d_);

    std::vector<float> nearest(n_);
    std::size_t first = rng.index(n_);
    std::copy_n(point(first), d_, centroid(0));
    parallel_for(0, n_, kChunk, [&](std::size_t lo, std::size_t hi) {
      for (std::size_t i = lo; i < hi; ++i) nearest[i] = detail::squared_distance_f(point(i), centroid(0), d_);
    });

    std::vector<double> prefix(n_);
    std::vector<std::size_t> picks;
    RowMatrixF cand(static_cast<Eigen::Index>(trials), static_cast<Eigen::Index>(d_));
    std::vector<float> cand_norms(trials);
    RowMatrixF dist(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(trials));
    std::vector<double> partial(chunks * trials);

    for (std::size_t c = 1; c < m_; ++c) {
      double run = 0.0;
      for (std::size_t i = 0; i < n_; ++i) {
        run += nearest[i];
        prefix[i] = run;
      }
      picks.clear();
      if (run <= 0.0) {
        picks.push_back(rng.index(n_));
      } else {
        for (std::size_t t = 0; t < trials; ++t) {
          const double target = rng.uniform() * run;
          std::size_t i = static_cast<std::size_t>(std::upper_bound(prefix.begin(), prefix.end(), target) - prefix.begin());
          i = std::min(i, n_ - 1);
          while (i > 0 && nearest[i] <= 0.0f) --i;  // never land on a zero-weight row
          picks.push_back(i);
        }
      }
      const std::size_t k = picks.size();
      for (std::size_t t = 0; t < k; ++t) {
        std::copy_n(point(picks[t]), d_, cand.data() + t * d_);
        cand_norms[t] = point_norms[picks[t]];
      }
      const auto cblock = cand.topRows(static_cast<Eigen::Index>(k));
      parallel_for(0, chunks, 1, [&](std::size_t c0, std::size_t c1) {
        for (std::size_t ch = c0; ch < c1; ++ch) {
          const std::size_t lo = ch * kChunk;
          const std::size_t hi = std::min(n_, lo + kChunk);
          Eigen::Map<const RowMatrixF> xb(point(lo), static_cast<Eigen::Index>(hi - lo), static_cast<Eigen::Index>(d_));
          RowMatrixF g = xb * cblock.transpose();
          for (std::size_t t = 0; t < k; ++t) {
            double acc = 0.0;
            for (std::size_t i = lo; i < hi; ++i) {
              const float dd = std::max(0.0f, point_norms[i] + cand_norms[t] - 2.0f * g(static_cast<Eigen::Index>(i - lo), static_cast<Eigen::Index>(t)));
              dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) = dd;
              acc += std::min(nearest[i], dd);
            }
            partial[ch * trials + t] = acc;
          }
        }
      });
      std::size_t best = 0;
      double best_potential = std::numeric_limits<double>::infinity();
      for (std::size_t t = 0; t < k; ++t) {
        double pot = 0.0;
        for (std::size_t ch = 0; ch < chunks; ++ch) pot += partial[ch * trials + t];
        if (pot < best_potential) {
          best_potential = pot;
          best = t;
        }
      }
      std::copy_n(point(picks[best]), d_, centroid(c));
      nearest[picks[best]] = 0.0f;
      for (std::size_t i = 0; i < n_; ++i) {
        nearest[i] = std::min(nearest[i], dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(best)));
      }
      nearest[picks[best]] = 0.0f;
    }
  }

  std::vector<float> centroid_sq_norms() const {
    std::vector<float> norms(m_);
    for (std::size_t c = 0; c < m_; ++c) norms[c] = detail::dot_f(centroid(c), centroid(c), d_);
    return norms;
  }

  Top2 top_two() const {
    Top2 t{std::vector<std::uint32_t>(n_), std::vector<float>(n_)};
    const auto norms = centroid_sq_norms();
    Eigen::Map<const RowMatrixF> cmat(centroids_.data(), static_cast<Eigen::Index>(m_), static_cast<Eigen::Index>(d_));
    parallel_for(0, n_, kBlockRows, [&](std::size_t lo, std::size_t hi) {
      Eigen::Map<const RowMatrixF> xb(point(lo), static_cast<Eigen::Index>(hi - lo), static_cast<Eigen::Index>(d_));
      RowMatrixF g = xb * cmat.transpose();
      for (std::size_t i = lo; i < hi; ++i) {
        const float* gi = g.data() + (i - lo) * m_;
        float s1 = std::numeric_limits<float>::max();
        float s2 = std::numeric_limits<float>::max();
        std::uint32_t b1 = 0;
        for (std::size_t c = 0; c < m_; ++c) {
          const float s = norms[c] - 2.0f * gi[c];
          if (s < s1) {
            s2 = s1;
            s1 = s;
            b1 = static_cast<std::uint32_t>(c);
          } else if (s < s2) {
            s2 = s;
          }
        }
        t.best[i] = b1;
        t.margin[i] = s1 - s2;
      }
    });
    return t;
  }

  std::vector<std::uint32_t> capacity_assign() const {
    const Top2 top = top_two();
    std::vector<std::size_t> order(n_);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (top.margin[a] != top.margin[b]) return top.margin[a] < top.margin[b];
      return a < b;
    });
    std::vector<std::size_t> load(m_, 0);
    std::vector<std::uint32_t> assign(n_);
    std::vector<std::pair<float, std::uint32_t>> ranked(m_);
    for (std::size_t i : order) {
      std::uint32_t target = top.best[i];
      if (load[target] >= bounds_.max_size) {
        for (std::size_t c = 0; c < m_; ++c) {
          ranked[c] = {detail::squared_distance_f(point(i), centroid(c), d_), static_cast<std::uint32_t>(c)};
        }
        std::sort(ranked.begin(), ranked.end());
        for (const auto& [dist, c] : ranked) {
          if (load[c] < bounds_.max_size) {
            target = c;
            break;
          }
        }
      }
      assign[i] = target;
      ++load[target];
    }
    return assign;
  }

  // Reseed each empty cluster with the point farthest from its own centroid.
  void fill_empty_clusters(std::vector<std::uint32_t>& assign) const {
    std::vector<std::size_t> load(m_, 0);
    for (auto c : assign) ++load[c];
    for (std::size_t c = 0; c < m_; ++c) {
      if (load[c] > 0) continue;
      double worst = -1.0;
      std::size_t far = n_;
      for (std::size_t i = 0; i < n_; ++i) {
        if (load[assign[i]] <= 1) continue;
        const double dist = squared_distance(x_.row(i), {centroid(assign[i]), d_});
        if (dist > worst) {
          worst = dist;
          far = i;
        }
      }
      if (far == n_) throw Error("cannot repair empty cluster: no cluster has a spare point");
      --load[assign[far]];
      assign[far] = static_cast<std::uint32_t>(c);
      load[c] = 1;
    }
  }

  void update_centroids(const std::vector<std::uint32_t>& assign) {
    std::vector<double> sums(m_ * d_, 0.0);
    std::vector<std::size_t> load(m_, 0);
    for (std::size_t i = 0; i < n_; ++i) {
      double* s = sums.data() + assign[i] * d_;
      const float* p = point(i);
      for (std::size_t t = 0; t < d_; ++t) s[t] += p[t];
      ++load[assign[i]];
    }
    for (std::size_t c = 0; c < m_; ++c) {
      if (load[c] == 0) continue;
      for (std::size_t t = 0; t < d_; ++t) centroid(c)[t] = static_cast<float>(sums[c * d_ + t] / static_cast<double>(load[c]));
    }
  }

  double sse(const std::vector<std::uint32_t>& assign) const {
    const std::size_t chunks = (n_ + kChunk - 1) / kChunk;
    std::vector<double> partial(chunks, 0.0);
    parallel_for(0, chunks, 1, [&](std::size_t c0, std::size_t c1) {
      for (std::size_t c = c0; c < c1; ++c) {
        double acc = 0.0;
        for (std::size_t i = c * kChunk; i < std::min(n_, (c + 1) * kChunk); ++i) {
          acc += squared_distance(x_.row(i), {centroid(assign[i]), d_});
        }
        partial[c] = acc;
      }
    });
    double total = 0.0;
    for (double p : partial) total += p;
    return total;
  }

  // Moves nearest points from clusters above the minimum into undersized ones.
  std::size_t repair_min_sizes(std::vector<std::uint32_t>& assign) const {
    std::vector<std::size_t> load(m_, 0);
    for (auto c : assign) ++load[c];
    std::size_t moved = 0;
    std::vector<std::pair<double, std::size_t>> candidates;
    for (std::size_t c = 0; c < m_; ++c) {
      if (load[c] >= bounds_.min_size) continue;
      candidates.clear();
      for (std::size_t i = 0; i < n_; ++i) {
        if (assign[i] == c || load[assign[i]] <= bounds_.min_size) continue;
        candidates.emplace_back(squared_distance(x_.row(i), {centroid(c), d_}), i);
      }
      std::sort(candidates.begin(), candidates.end());
      for (const auto& [dist, i] : candidates) {
        if (load[c] >= bounds_.min_size) break;
        if (load[assign[i]] <= bounds_.min_size) continue;
        --load[assign[i]];
        assign[i] = static_cast<std::uint32_t>(c);
        ++load[c];
        ++moved;
      }
      if (load[c] < bounds_.min_size) throw Error("minimum-size repair failed for cluster " + std::to_string(c));
    }
    return moved;
  }

  const EmbeddingMatrix& x_;
  const BalanceConfig& config_;
  SizeBounds bounds_;
  std::size_t n_;
  std::size_t d_;
  std::size_t m_;
  std::vector<float> centroids_;
};

}  // namespace

KmeansRun balanced_kmeans_run(const EmbeddingMatrix& x, const BalanceConfig& config) {
  if (config.max_iters == 0) throw ValidationError("max_iters must be positive");
  const SizeBounds bounds = size_bounds(x.rows(), config);
  return Solver(x, config, bounds).run();
}

std::vector<Clustering> kmeans_sweep(const EmbeddingMatrix& x, std::span<const std::size_t> avg_sizes,
                                     std::uint64_t seed, const BalanceConfig& base) {
  std::set<std::size_t> seen;
  for (auto s : avg_sizes) {
    if (!seen.insert(s).second) throw ValidationError("duplicate sweep size " + std::to_string(s));
  }
  std::vector<Clustering> out;
  out.reserve(avg_sizes.size());
  for (auto size : avg_sizes) {
    BalanceConfig cfg = base;
    cfg.avg_size = size;
    cfg.seed = mix_seed(seed, size);
    try {
      out.push_back(balanced_kmeans(x, cfg));
    } catch (const InfeasibleError& e) {
      throw InfeasibleError("avg size " + std::to_string(size) + ": " + e.what());
    }
  }
  return out;
}

double within_cluster_sse(const EmbeddingMatrix& x, const Clustering& clustering) {
  if (clustering.size() != x.rows()) throw ValidationError("clustering does not cover the matrix");
  const auto members = clustering.members();
  double total = 0.0;
  std::vector<double> mean(x.dim());
  for (std::size_t c = 0; c < clustering.num_clusters(); ++c) {
    std::fill(mean.begin(), mean.end(), 0.0);
    const auto idx = members.of(c);
    for (auto i : idx) {
      const auto r = x.row(i);
      for (std::size_t t = 0; t < mean.size(); ++t) mean[t] += r[t];
    }
    for (auto& v : mean) v /= static_cast<double>(idx.size());
    for (auto i : idx) {
      const auto r = x.row(i);
      for (std::size_t t = 0; t < mean.size(); ++t) {
        const double diff = r[t] - mean[t];
        total += diff * diff;
      }
    }
  }
  return total;
}

}  // namespace embcurate
