#pragma once

// Float distance kernels with a fixed 16-lane accumulation order, so the
// compiler can vectorize them without changing results between builds of the
// same code.

#include <cstddef>

namespace embcurate::detail {

inline float squared_distance_f(const float* a, const float* b, std::size_t d) {
  float lanes[16] = {};
  std::size_t t = 0;
  for (; t + 16 <= d; t += 16) {
    for (std::size_t l = 0; l < 16; ++l) {
      const float diff = a[t + l] - b[t + l];
      lanes[l] += diff * diff;
    }
  }
  for (std::size_t l = 0; t < d; ++t, ++l) {
    const float diff = a[t] - b[t];
    lanes[l] += diff * diff;
  }
  float sum = 0.0f;
  for (float v : lanes) sum += v;
  return sum;
}

inline float dot_f(const float* a, const float* b, std::size_t d) {
  float lanes[16] = {};
  std::size_t t = 0;
  for (; t + 16 <= d; t += 16) {
    for (std::size_t l = 0; l < 16; ++l) lanes[l] += a[t + l] * b[t + l];
  }
  for (std::size_t l = 0; t < d; ++t, ++l) lanes[l] += a[t] * b[t];
  float sum = 0.0f;
  for (float v : lanes) sum += v;
  return sum;
}

}  // namespace embcurate::detail
