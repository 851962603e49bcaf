#include "embcurate/reducers.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>

#include <Eigen/Dense>

#include "binary_io.hpp"
#include "embcurate/error.hpp"
#include "embcurate/parallel.hpp"
#include "embcurate/rng.hpp"

namespace embcurate {
namespace {

using RowMatrixD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr std::size_t kBlockRows = 1024;
constexpr std::size_t kCovarianceChunk = 32768;
constexpr double kDegenerateNorm = 1e-12;

// Standardized copy of rows [lo, hi).
RowMatrixD standardize_block(const EmbeddingMatrix& x, std::size_t lo, std::size_t hi, const std::vector<double>& mean,
                             const std::vector<double>& scale) {
  const std::size_t d = x.dim();
  RowMatrixD z(hi - lo, d);
  for (std::size_t i = lo; i < hi; ++i) {
    const auto r = x.row(i);
    for (std::size_t j = 0; j < d; ++j) z(i - lo, j) = (static_cast<double>(r[j]) - mean[j]) / scale[j];
  }
  return z;
}

// Orient each component so its largest-magnitude entry is positive.
void fix_signs(Eigen::MatrixXd& vectors) {
  for (Eigen::Index c = 0; c < vectors.cols(); ++c) {
    Eigen::Index arg = 0;
    double best = -1.0;
    for (Eigen::Index r = 0; r < vectors.rows(); ++r) {
      if (std::abs(vectors(r, c)) > best + 1e-12) {
        best = std::abs(vectors(r, c));
        arg = r;
      }
    }
    if (vectors(arg, c) < 0) vectors.col(c) *= -1.0;
  }
}

// Top-k eigenpairs by block subspace iteration with Rayleigh-Ritz.
void top_k_iterative(const Eigen::MatrixXd& cov, std::size_t k, const PcaOptions& options, Eigen::MatrixXd& vectors,
                     Eigen::VectorXd& values) {
  const Eigen::Index d = cov.rows();
  const Eigen::Index p = std::min<Eigen::Index>(d, static_cast<Eigen::Index>(k) + 10);
  Rng rng(0x5ca1ab1eULL);
  Eigen::MatrixXd q(d, p);
  for (Eigen::Index j = 0; j < p; ++j)
    for (Eigen::Index i = 0; i < d; ++i) q(i, j) = rng.normal();
  q = Eigen::HouseholderQR<Eigen::MatrixXd>(q).householderQ() * Eigen::MatrixXd::Identity(d, p);

  const double scale = std::max(cov.diagonal().maxCoeff(), 1e-300);
  for (std::size_t iter = 0; iter < options.iterative_max_iters; ++iter) {
    Eigen::MatrixXd y = cov * q;
    q = Eigen::HouseholderQR<Eigen::MatrixXd>(y).householderQ() * Eigen::MatrixXd::Identity(d, p);
    Eigen::MatrixXd t = q.transpose() * cov * q;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> small(t);
    q = q * small.eigenvectors().rowwise().reverse();
    values = small.eigenvalues().reverse();
    Eigen::MatrixXd residual = cov * q.leftCols(k) - q.leftCols(k) * values.head(k).asDiagonal();
    if (residual.colwise().norm().maxCoeff() <= options.iterative_tolerance * scale) break;
  }
  vectors = q.leftCols(k);
  values = values.head(k).eval();
}

}  // namespace

PcaModel fit_pca(const EmbeddingMatrix& sample, std::size_t k, const PcaOptions& options) {
  const std::size_t n = sample.rows();
  const std::size_t d = sample.dim();
  if (k == 0) throw ValidationError("k must be positive");
  if (k > d) throw ValidationError("k = " + std::to_string(k) + " exceeds input dimension " + std::to_string(d));
  if (n <= k) throw ValidationError("PCA needs more samples than components (n = " + std::to_string(n) + ", k = " +
                                    std::to_string(k) + ")");

  PcaModel model;
  model.in_dim = d;
  model.out_dim = k;
  model.mean.assign(d, 0.0);
  model.scale.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = sample.row(i);
    for (std::size_t j = 0; j < d; ++j) model.mean[j] += r[j];
  }
  for (auto& m : model.mean) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = sample.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      const double c = r[j] - model.mean[j];
      model.scale[j] += c * c;
    }
  }
  for (std::size_t j = 0; j < d; ++j) {
    const double sd = std::sqrt(model.scale[j] / static_cast<double>(n));
    // Constant dimensions standardize to 0 instead of dividing by zero.
    model.scale[j] = sd <= 1e-12 * std::max(1.0, std::abs(model.mean[j])) ? 1.0 : sd;
  }

  const std::size_t chunks = (n + kCovarianceChunk - 1) / kCovarianceChunk;
  std::vector<Eigen::MatrixXd> partial(chunks);
  parallel_for(0, chunks, 1, [&](std::size_t c0, std::size_t c1) {
    for (std::size_t c = c0; c < c1; ++c) {
      Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(d, d);
      const std::size_t lo = c * kCovarianceChunk;
      const std::size_t hi = std::min(n, lo + kCovarianceChunk);
      for (std::size_t b = lo; b < hi; b += kBlockRows) {
        RowMatrixD z = standardize_block(sample, b, std::min(hi, b + kBlockRows), model.mean, model.scale);
        acc.selfadjointView<Eigen::Lower>().rankUpdate(z.transpose());
      }
      partial[c] = std::move(acc);
    }
  });
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
  for (const auto& p : partial) cov += p;
  cov = cov.selfadjointView<Eigen::Lower>();
  cov /= static_cast<double>(n);
  model.total_variance = cov.trace();

  Eigen::MatrixXd vectors;
  Eigen::VectorXd values;
  if (d <= options.dense_solver_max_dim) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) throw Error("covariance eigendecomposition failed");
    vectors = solver.eigenvectors().rightCols(k).rowwise().reverse();
    values = solver.eigenvalues().tail(k).reverse();
  } else {
    top_k_iterative(cov, k, options, vectors, values);
  }
  fix_signs(vectors);

  model.components.resize(k * d);
  model.explained_variance.resize(k);
  for (std::size_t c = 0; c < k; ++c) {
    model.explained_variance[c] = std::max(0.0, values(static_cast<Eigen::Index>(c)));
    for (std::size_t j = 0; j < d; ++j) model.components[c * d + j] = vectors(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(c));
  }
  return model;
}

double RpModel::expected_scale() const { return value * std::sqrt(static_cast<double>(out_dim) / 2.0); }

RpModel fit_rp(std::size_t in_dim, std::size_t k, std::uint64_t seed) {
  if (in_dim == 0) throw ValidationError("input dimension must be positive");
  if (k == 0) throw ValidationError("k must be positive");
  RpModel model;
  model.seed = seed;
  model.in_dim = in_dim;
  model.out_dim = k;
  model.value = std::sqrt(static_cast<double>(in_dim)) / std::sqrt(static_cast<double>(k));
  model.signs.resize(in_dim * k);
  Rng rng(seed);
  std::uint64_t word = 0;
  int left = 0;
  for (auto& s : model.signs) {
    if (left == 0) {
      word = rng.bits();
      left = 32;
    }
    // Two fair bits: 00 -> -1, 11 -> +1, otherwise 0.
    const unsigned pair = word & 3u;
    word >>= 2;
    --left;
    s = pair == 0 ? -1 : (pair == 3 ? 1 : 0);
  }
  return model;
}

namespace {

void finish_rows(RowMatrixD& y, std::size_t lo, Normalize normalize, EmbeddingMatrix& out,
                 std::vector<char>& degenerate) {
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    auto dst = out.row(lo + static_cast<std::size_t>(i));
    if (normalize == Normalize::kYes) {
      const double norm = y.row(i).norm();
      if (norm <= kDegenerateNorm) {
        std::fill(dst.begin(), dst.end(), 0.0f);
        dst[0] = 1.0f;
        degenerate[lo + static_cast<std::size_t>(i)] = 1;
        continue;
      }
      y.row(i) /= norm;
    }
    for (Eigen::Index j = 0; j < y.cols(); ++j) dst[static_cast<std::size_t>(j)] = static_cast<float>(y(i, j));
  }
}

std::vector<std::size_t> collect(const std::vector<char>& flags) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < flags.size(); ++i)
    if (flags[i]) out.push_back(i);
  return out;
}

}  // namespace

Reduction apply_pca(const PcaModel& model, const EmbeddingMatrix& x, Normalize normalize) {
  if (x.dim() != model.in_dim) {
    throw ValidationError("dimension mismatch: PCA model expects " + std::to_string(model.in_dim) + ", got " +
                          std::to_string(x.dim()));
  }
  const std::size_t n = x.rows();
  const std::size_t k = model.out_dim;
  Eigen::Map<const RowMatrixD> comps(model.components.data(), static_cast<Eigen::Index>(k),
                                     static_cast<Eigen::Index>(model.in_dim));
  EmbeddingMatrix out(n, k);
  std::vector<char> degenerate(n, 0);
  parallel_for(0, n, kBlockRows, [&](std::size_t lo, std::size_t hi) {
    RowMatrixD z = standardize_block(x, lo, hi, model.mean, model.scale);
    RowMatrixD y = z * comps.transpose();
    finish_rows(y, lo, normalize, out, degenerate);
  });
  return {std::move(out), collect(degenerate)};
}

Reduction apply_rp(const RpModel& model, const EmbeddingMatrix& x, Normalize normalize) {
  if (x.dim() != model.in_dim) {
    throw ValidationError("dimension mismatch: RP model expects " + std::to_string(model.in_dim) + ", got " +
                          std::to_string(x.dim()));
  }
  const std::size_t n = x.rows();
  const std::size_t d = model.in_dim;
  const std::size_t k = model.out_dim;
  std::vector<std::vector<std::uint32_t>> plus(k), minus(k);
  for (std::size_t r = 0; r < k; ++r) {
    for (std::size_t j = 0; j < d; ++j) {
      const auto s = model.signs[r * d + j];
      if (s > 0) plus[r].push_back(static_cast<std::uint32_t>(j));
      if (s < 0) minus[r].push_back(static_cast<std::uint32_t>(j));
    }
  }
  EmbeddingMatrix out(n, k);
  std::vector<char> degenerate(n, 0);
  parallel_for(0, n, kBlockRows, [&](std::size_t lo, std::size_t hi) {
    RowMatrixD y(hi - lo, k);
    for (std::size_t i = lo; i < hi; ++i) {
      const auto row = x.row(i);
      for (std::size_t r = 0; r < k; ++r) {
        double acc = 0.0;
        for (auto j : plus[r]) acc += row[j];
        for (auto j : minus[r]) acc -= row[j];
        y(static_cast<Eigen::Index>(i - lo), static_cast<Eigen::Index>(r)) = model.value * acc;
      }
    }
    finish_rows(y, lo, normalize, out, degenerate);
  });
  return {std::move(out), collect(degenerate)};
}

Reduction apply_reducer(const ReducerModel& model, const EmbeddingMatrix& x) {
  return std::visit(
      [&](const auto& m) -> Reduction {
        if constexpr (std::is_same_v<std::decay_t<decltype(m)>, PcaModel>) {
          return apply_pca(m, x);
        } else {
          return apply_rp(m, x);
        }
      },
      model);
}

std::vector<std::size_t> fit_sample_indices(std::size_t rows, std::size_t max_rows, std::uint64_t seed) {
  std::vector<std::size_t> idx(rows);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (rows <= max_rows) return idx;
  Rng rng(seed);
  for (std::size_t i = 0; i < max_rows; ++i) {
    const std::size_t j = i + rng.index(rows - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(max_rows);
  std::sort(idx.begin(), idx.end());
  return idx;
}

namespace {

constexpr std::uint8_t kSchemePca = 1;
constexpr std::uint8_t kSchemeRp = 2;

template <class T>
void write_values(std::ostream& out, const std::vector<T>& values) {
  for (const T& v : values) detail::write_le(out, v);
}

template <class T>
std::vector<T> read_values(std::istream& in, std::size_t count, const std::string& what) {
  std::vector<T> values(count);
  for (auto& v : values) v = detail::read_le<T>(in, what);
  return values;
}

}  // namespace

void save_reducer(const std::filesystem::path& path, const ReducerModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  detail::write_magic(out, "RED1");
  if (const auto* pca = std::get_if<PcaModel>(&model)) {
    detail::write_le<std::uint8_t>(out, kSchemePca);
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(pca->in_dim));
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(pca->out_dim));
    detail::write_le<double>(out, pca->total_variance);
    write_values(out, pca->mean);
    write_values(out, pca->scale);
    write_values(out, pca->explained_variance);
    write_values(out, pca->components);
  } else {
    const auto& rp = std::get<RpModel>(model);
    detail::write_le<std::uint8_t>(out, kSchemeRp);
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(rp.in_dim));
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(rp.out_dim));
    detail::write_le<std::uint64_t>(out, rp.seed);
    detail::write_le<double>(out, rp.value);
    write_values(out, rp.signs);
  }
  if (!out) throw Error("failed writing " + path.string());
}

ReducerModel load_reducer(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  detail::expect_magic(in, "RED1", path.string());
  const auto scheme = detail::read_le<std::uint8_t>(in, "scheme tag");
  const std::size_t d = detail::read_le<std::uint32_t>(in, "input dimension");
  const std::size_t k = detail::read_le<std::uint32_t>(in, "output dimension");
  if (d == 0 || k == 0) throw FormatError("malformed header in " + path.string() + ": zero dimension");
  try {
    if (scheme == kSchemePca) {
      PcaModel m;
      m.in_dim = d;
      m.out_dim = k;
      m.total_variance = detail::read_le<double>(in, "total variance");
      m.mean = read_values<double>(in, d, "mean");
      m.scale = read_values<double>(in, d, "scale");
      m.explained_variance = read_values<double>(in, k, "explained variance");
      m.components = read_values<double>(in, k * d, "components");
      return m;
    }
    if (scheme == kSchemeRp) {
      RpModel m;
      m.in_dim = d;
      m.out_dim = k;
      m.seed = detail::read_le<std::uint64_t>(in, "seed");
      m.value = detail::read_le<double>(in, "value");
      m.signs = read_values<std::int8_t>(in, k * d, "signs");
      return m;
    }
  } catch (const FormatError&) {
    throw FormatError(path.string() + ": truncated payload");
  }
  throw FormatError("malformed header in " + path.string() + ": unknown scheme tag " + std::to_string(scheme));
}

}  // namespace embcurate
