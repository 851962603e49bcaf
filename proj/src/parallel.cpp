#include "embcurate/parallel.hpp"

#include <cstdlib>
#include <string>

namespace embcurate {
namespace {

unsigned initial_thread_count() {
  if (const char* env = std::getenv("EMBCURATE_THREADS"); env != nullptr && *env != '\0') {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<unsigned>(v);
    } catch (...) {
    }
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

std::atomic<unsigned>& cap() {
  static std::atomic<unsigned> value{initial_thread_count()};
  return value;
}

}  // namespace

unsigned thread_count() { return cap().load(); }

void set_thread_count(unsigned threads) { cap().store(threads == 0 ? 1 : threads); }

}  // namespace embcurate
