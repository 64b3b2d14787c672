#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace volseg {

/// Seeded generator with platform-independent uniform draws. The standard
/// distributions are implementation-defined, so reproducible runs go through
/// these helpers instead.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : engine_(seed) {}

  uint64_t next() { return engine_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n). n must be positive.
  uint64_t below(uint64_t n) {
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t r;
    do {
      r = engine_();
    } while (r >= limit);
    return r % n;
  }

  bool bernoulli(double p) { return uniform01() < p; }

  /// Independent stream for a named sub-task, e.g. one volume of a dataset.
  static uint64_t derive_seed(uint64_t seed, std::string_view tag);

 private:
  std::mt19937_64 engine_;
};

}  // namespace volseg
