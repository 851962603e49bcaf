#pragma once

#include <atomic>
#include <filesystem>
#include <string>

#include <unistd.h>

#include "embcurate/matrix.hpp"
#include "embcurate/rng.hpp"

namespace test_util {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("embcurate-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline embcurate::EmbeddingMatrix gaussian_matrix(std::size_t n, std::size_t d, std::uint64_t seed, double scale = 1.0) {
  embcurate::Rng rng(seed);
  std::vector<float> v(n * d);
  for (auto& x : v) x = static_cast<float>(scale * rng.normal());
  return embcurate::EmbeddingMatrix(n, d, std::move(v));
}

inline embcurate::EmbeddingMatrix unit_rows(embcurate::EmbeddingMatrix m) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    const double norm = embcurate::l2_norm(r);
    for (auto& x : r) x = static_cast<float>(x / norm);
  }
  return m;
}

}  // namespace test_util
