#include "embcurate/testkit.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <string>

#include <Eigen/Dense>

#include "embcurate/error.hpp"
#include "embcurate/rng.hpp"

namespace embcurate::testkit {

void SyntheticSpec::validate() const {
  if (n == 0 || d == 0) throw ValidationError("synthetic corpus needs n >= 1 and d >= 1");
  if (k_true == 0 || k_true > n) throw ValidationError("k_true must be in [1, n]");
  if (latent_dim > d) throw ValidationError("latent_dim exceeds d");
  if (num_sources == 0) throw ValidationError("num_sources must be positive");
  if (source_purity < 0.0 || source_purity > 1.0) throw ValidationError("source_purity must be in [0, 1]");
  if (sigma_between < 0.0 || sigma_within < 0.0 || cluster_spread < 0.0 || ambient_noise < 0.0 || center_scale < 0.0) {
    throw ValidationError("scales must be non-negative");
  }
  if (duplicate_fraction < 0.0 || duplicate_fraction >= 1.0) throw ValidationError("duplicate_fraction must be in [0, 1)");
  if (2 * static_cast<std::size_t>(std::floor(duplicate_fraction * static_cast<double>(n) + 1e-9)) > n) {
    throw ValidationError("duplicate_fraction leaves too few originals to copy");
  }
  if (min_tokens == 0 || min_tokens > max_tokens) throw ValidationError("token range must satisfy 1 <= min <= max");
  if (vocab_size > 0 && (vocab_size < 2 + k_true || table_dim == 0)) {
    throw ValidationError("vocab_size must exceed k_true + 2 and table_dim must be positive");
  }
}

double expected_planted_variance_reduction(const SyntheticSpec& spec) {
  const double w = spec.sigma_within * spec.sigma_within;
  return (spec.sigma_between * spec.sigma_between + w) / w;
}

SyntheticCorpus generate(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t n = spec.n;
  const std::size_t d = spec.d;
  const std::size_t latent = spec.latent_dim == 0 ? d : spec.latent_dim;
  Rng rng(spec.seed);

  // Orthonormal latent basis (latent x d).
  Eigen::MatrixXd basis;
  if (latent == d) {
    basis = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  } else {
    Eigen::MatrixXd g(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(latent));
    for (Eigen::Index j = 0; j < g.cols(); ++j)
      for (Eigen::Index i = 0; i < g.rows(); ++i) g(i, j) = rng.normal();
    Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ() *
                        Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(latent));
    basis = q.transpose();
  }

  std::vector<double> centers(spec.k_true * latent);
  for (auto& c : centers) c = spec.center_scale * rng.normal();
  std::vector<double> mu(spec.k_true);
  for (auto& m : mu) m = spec.sigma_between * rng.normal();
  std::vector<std::uint32_t> dominant(spec.k_true);
  for (auto& s : dominant) s = static_cast<std::uint32_t>(rng.index(spec.num_sources));

  SyntheticCorpus out;
  out.planted.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.planted[i] = static_cast<std::uint32_t>(i % spec.k_true);

  EmbeddingMatrix planted(n, d);
  std::vector<double> z(latent);
  for (std::size_t i = 0; i < n; ++i) {
    const double* center = centers.data() + out.planted[i] * latent;
    for (std::size_t t = 0; t < latent; ++t) z[t] = center[t] + spec.cluster_spread * rng.normal();
    auto row = planted.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      double v = spec.ambient_noise * rng.normal();
      for (std::size_t t = 0; t < latent; ++t) v += z[t] * basis(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j));
      row[j] = static_cast<float>(v);
    }
  }

  auto& records = out.corpus.records;
  records.resize(n);
  const std::int64_t last_step = spec.steps.empty() ? 1 : spec.steps.back();
  for (std::size_t i = 0; i < n; ++i) {
    auto& rec = records[i];
    rec.id = i;
    const auto c = out.planted[i];
    if (spec.num_sources > 1 && rng.uniform() >= spec.source_purity) {
      const auto other = static_cast<std::uint32_t>(rng.index(spec.num_sources - 1));
      rec.source = other >= dominant[c] ? other + 1 : other;
    } else {
      rec.source = dominant[c];
    }
    rec.token_count = spec.min_tokens + rng.index(spec.max_tokens - spec.min_tokens + 1);
    for (auto step : spec.steps) {
      // Loss level falls with training; the cluster structure is shared by all steps.
      const double base = 2.5 + 3.0 * static_cast<double>(last_step) / static_cast<double>(last_step + 4 * step);
      rec.losses[step] = base + mu[c] + spec.sigma_within * rng.normal();
    }
  }

  std::optional<EmbeddingMatrix> noise;
  if (spec.noise_model) {
    noise.emplace(n, d);
    for (auto& v : std::span<float>(noise->data(), n * d)) v = static_cast<float>(rng.normal());
  }

  if (spec.vocab_size > 0) {
    // Tokens 0 and 1 are reserved (pad, eod). Each planted cluster owns a slice
    // of the topical vocabulary; documents mix topical and background tokens.
    const std::size_t usable = spec.vocab_size - 2;
    const std::size_t slice = std::max<std::size_t>(1, usable / spec.k_true);
    out.documents.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = out.planted[i];
      auto& doc = out.documents[i];
      doc.resize(records[i].token_count);
      for (auto& t : doc) {
        if (rng.uniform() < 0.7) {
          t = static_cast<TokenId>(2 + (c * slice + rng.index(slice)) % usable);
        } else {
          t = static_cast<TokenId>(2 + rng.index(usable));
        }
      }
    }
    EmbeddingMatrix table(spec.vocab_size, spec.table_dim);
    for (auto& v : std::span<float>(table.data(), spec.vocab_size * spec.table_dim)) v = static_cast<float>(rng.normal());
    out.token_table.emplace(std::move(table));
  }

  // Exact duplicates: copies take every attribute of a distinct original.
  const std::size_t dup = static_cast<std::size_t>(std::floor(spec.duplicate_fraction * static_cast<double>(n) + 1e-9));
  if (dup > 0) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t i = 0; i < 2 * dup; ++i) std::swap(perm[i], perm[i + rng.index(n - i)]);
    for (std::size_t k = 0; k < dup; ++k) {
      const std::size_t copy = perm[k];
      const std::size_t original = perm[dup + k];
      out.duplicates.emplace_back(copy, original);
      auto src = planted.row(original);
      std::copy(src.begin(), src.end(), planted.row(copy).begin());
      if (noise) {
        auto nsrc = noise->row(original);
        std::copy(nsrc.begin(), nsrc.end(), noise->row(copy).begin());
      }
      const auto id = records[copy].id;
      records[copy] = records[original];
      records[copy].id = id;
      out.planted[copy] = out.planted[original];
      if (!out.documents.empty()) out.documents[copy] = out.documents[original];
    }
    std::sort(out.duplicates.begin(), out.duplicates.end());
  }

  out.corpus.embeddings.emplace("planted", std::move(planted));
  if (noise) out.corpus.embeddings.emplace("noise", std::move(*noise));
  out.corpus.checkpoint_steps = spec.steps;
  std::sort(out.corpus.checkpoint_steps.begin(), out.corpus.checkpoint_steps.end());
  return out;
}

Clustering random_clustering(std::size_t n, std::size_t avg_size, std::uint64_t seed) {
  if (n == 0 || avg_size == 0) throw ValidationError("random clustering needs n and avg_size positive");
  const std::size_t m = std::max<std::size_t>(1, (n + avg_size / 2) / avg_size);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.index(i)]);
  std::vector<std::uint32_t> assign(n);
  for (std::size_t r = 0; r < n; ++r) assign[perm[r]] = static_cast<std::uint32_t>(r % m);
  return Clustering(std::move(assign), m, Provenance{"random", static_cast<double>(avg_size), seed});
}

double adjusted_rand_index(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b) {
  if (a.size() != b.size()) throw ValidationError("labelings differ in length");
  const std::size_t n = a.size();
  std::uint32_t ma = 0, mb = 0;
  for (auto v : a) ma = std::max(ma, v + 1);
  for (auto v : b) mb = std::max(mb, v + 1);
  std::vector<std::vector<std::size_t>> table(ma, std::vector<std::size_t>(mb, 0));
  std::vector<std::size_t> rows(ma, 0), cols(mb, 0);
  for (std::size_t i = 0; i < n; ++i) {
    ++table[a[i]][b[i]];
    ++rows[a[i]];
    ++cols[b[i]];
  }
  auto pairs = [](std::size_t k) { return static_cast<double>(k) * static_cast<double>(k - (k > 0)) / 2.0; };
  double index = 0.0, sum_rows = 0.0, sum_cols = 0.0;
  for (const auto& r : table)
    for (auto v : r) index += pairs(v);
  for (auto v : rows) sum_rows += pairs(v);
  for (auto v : cols) sum_cols += pairs(v);
  const double expected = sum_rows * sum_cols / pairs(n);
  const double max_index = 0.5 * (sum_rows + sum_cols);
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

double oracle_variance_reduction(std::span<const std::uint32_t> labels, std::span<const double> losses) {
  const std::size_t n = losses.size();
  if (n > 1000) throw ValidationError("oracle limited to n <= 1000");
  if (labels.size() != n) throw ValidationError("labels and losses differ in length");
  // Var = (1 / 2n^2) * sum_i sum_j (x_i - x_j)^2
  auto pairwise_variance = [&](const std::vector<std::size_t>& idx) {
    long double acc = 0.0L;
    for (auto i : idx)
      for (auto j : idx) {
        const long double diff = static_cast<long double>(losses[i]) - losses[j];
        acc += diff * diff;
      }
    const long double k = static_cast<long double>(idx.size());
    return acc / (2.0L * k * k);
  };
  std::vector<std::size_t> everyone(n);
  std::iota(everyone.begin(), everyone.end(), std::size_t{0});
  const long double total = pairwise_variance(everyone);

  std::uint32_t m = 0;
  for (auto l : labels) m = std::max(m, l + 1);
  long double within = 0.0L;
  std::size_t clusters = 0;
  for (std::uint32_t c = 0; c < m; ++c) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < n; ++i)
      if (labels[i] == c) idx.push_back(i);
    if (idx.empty()) continue;
    within += pairwise_variance(idx);
    ++clusters;
  }
  return static_cast<double>(total / (within / static_cast<long double>(clusters)));
}

std::vector<std::uint32_t> oracle_complete_linkage(const EmbeddingMatrix& x, double epsilon) {
  const std::size_t n = x.rows();
  if (n > 1000) throw ValidationError("oracle limited to n <= 1000");
  std::vector<double> link(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < x.dim(); ++t) {
        const double diff = static_cast<double>(x.row(i)[t]) - static_cast<double>(x.row(j)[t]);
        s += diff * diff;
      }
      link[i * n + j] = s;
    }
  }
  std::vector<std::uint32_t> label(n);
  std::iota(label.begin(), label.end(), 0u);
  std::vector<char> alive(n, 1);
  for (;;) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t ba = n, bb = n;
    for (std::size_t a = 0; a < n; ++a) {
      if (!alive[a]) continue;
      for (std::size_t b = a + 1; b < n; ++b) {
        if (alive[b] && link[a * n + b] < best) {
          best = link[a * n + b];
          ba = a;
          bb = b;
        }
      }
    }
    if (ba == n || best > epsilon) break;
    // Cluster slots are indexed by their smallest member, so `ba` survives.
    for (std::size_t k = 0; k < n; ++k) {
      if (!alive[k] || k == ba || k == bb) continue;
      const double merged = std::max(link[ba * n + k], link[bb * n + k]);
      link[ba * n + k] = merged;
      link[k * n + ba] = merged;
    }
    alive[bb] = 0;
    for (auto& l : label)
      if (l == bb) l = static_cast<std::uint32_t>(ba);
  }
  return label;
}

OraclePca oracle_pca(const EmbeddingMatrix& sample, std::size_t k) {
  const std::size_t n = sample.rows();
  const std::size_t d = sample.dim();
  if (d > 32) throw ValidationError("oracle limited to d <= 32");
  if (k > d) throw ValidationError("k exceeds d");
  std::vector<double> mean(d, 0.0), sd(d, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < n; ++i) mean[j] += sample.row(i)[j];
    mean[j] /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) sd[j] += (sample.row(i)[j] - mean[j]) * (sample.row(i)[j] - mean[j]);
    sd[j] = std::sqrt(sd[j] / static_cast<double>(n));
    if (sd[j] <= 1e-12 * std::max(1.0, std::abs(mean[j]))) sd[j] = 1.0;
  }
  std::vector<double> a(d * d, 0.0);
  for (std::size_t p = 0; p < d; ++p) {
    for (std::size_t q = 0; q < d; ++q) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        s += ((sample.row(i)[p] - mean[p]) / sd[p]) * ((sample.row(i)[q] - mean[q]) / sd[q]);
      }
      a[p * d + q] = s / static_cast<double>(n);
    }
  }
  // Cyclic Jacobi; v accumulates the rotations (columns are eigenvectors).
  std::vector<double> v(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) v[i * d + i] = 1.0;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < d; ++p)
      for (std::size_t q = p + 1; q < d; ++q) off += a[p * d + q] * a[p * d + q];
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < d; ++p) {
      for (std::size_t q = p + 1; q < d; ++q) {
        const double apq = a[p * d + q];
        if (std::abs(apq) < 1e-300) continue;
        const double theta = (a[q * d + q] - a[p * d + p]) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t r = 0; r < d; ++r) {
          const double arp = a[r * d + p], arq = a[r * d + q];
          a[r * d + p] = c * arp - s * arq;
          a[r * d + q] = s * arp + c * arq;
        }
        for (std::size_t r = 0; r < d; ++r) {
          const double apr = a[p * d + r], aqr = a[q * d + r];
          a[p * d + r] = c * apr - s * aqr;
          a[q * d + r] = s * apr + c * aqr;
        }
        for (std::size_t r = 0; r < d; ++r) {
          const double vrp = v[r * d + p], vrq = v[r * d + q];
          v[r * d + p] = c * vrp - s * vrq;
          v[r * d + q] = s * vrp + c * vrq;
        }
      }
    }
  }
  std::vector<std::size_t> order(d);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t x1, std::size_t x2) { return a[x1 * d + x1] > a[x2 * d + x2]; });
  OraclePca out;
  for (auto idx : order) out.eigenvalues.push_back(a[idx * d + idx]);
  out.components.resize(k * d);
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t j = 0; j < d; ++j) out.components[c * d + j] = v[j * d + order[c]];
  return out;
}

double max_principal_angle(std::span<const double> a, std::span<const double> b, std::size_t k, std::size_t d) {
  using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const Mat> ma(a.data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(d));
  Eigen::Map<const Mat> mb(b.data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(d));
  // Rows of b minus their projection onto span(a); its largest singular value
  // is the sine of the largest principal angle.
  Mat residual = mb - (mb * ma.transpose()) * ma;
  Eigen::JacobiSVD<Mat> svd(residual);
  const double s = svd.singularValues().size() > 0 ? svd.singularValues()(0) : 0.0;
  return std::asin(std::min(1.0, s));
}

std::vector<std::uint32_t> oracle_min_sse_partition(const EmbeddingMatrix& x, std::size_t m, std::size_t min_size,
                                                    std::size_t max_size) {
  const std::size_t n = x.rows();
  if (n > 10) throw ValidationError("oracle limited to n <= 10");
  std::vector<std::uint32_t> current(n), best;
  double best_sse = std::numeric_limits<double>::infinity();
  auto sse_of = [&](const std::vector<std::uint32_t>& lab) {
    double total = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
      std::vector<double> mean(x.dim(), 0.0);
      std::size_t cnt = 0;
      for (std::size_t i = 0; i < n; ++i)
        if (lab[i] == c) {
          ++cnt;
          for (std::size_t t = 0; t < x.dim(); ++t) mean[t] += x.row(i)[t];
        }
      for (auto& v : mean) v /= static_cast<double>(cnt);
      for (std::size_t i = 0; i < n; ++i)
        if (lab[i] == c)
          for (std::size_t t = 0; t < x.dim(); ++t) total += (x.row(i)[t] - mean[t]) * (x.row(i)[t] - mean[t]);
    }
    return total;
  };
  // Restricted-growth strings enumerate each set partition once.
  std::function<void(std::size_t, std::uint32_t)> rec = [&](std::size_t i, std::uint32_t used) {
    if (i == n) {
      if (used != m) return;
      std::vector<std::size_t> sizes(m, 0);
      for (auto l : current) ++sizes[l];
      for (auto s : sizes)
        if (s < min_size || s > max_size) return;
      const double s = sse_of(current);
      if (s < best_sse) {
        best_sse = s;
        best = current;
      }
      return;
    }
    for (std::uint32_t c = 0; c <= used && c < m; ++c) {
      current[i] = c;
      rec(i + 1, std::max(used, c + 1));
    }
  };
  rec(0, 0);
  if (best.empty()) throw InfeasibleError("no size-legal partition");
  return best;
}

}  // namespace embcurate::testkit
