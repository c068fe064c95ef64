#pragma once

#include <cstdint>
#include <random>

namespace gridmarket {

/// Seeded RNG with self-contained value mapping so that identical seeds give
/// identical draws on every platform and standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform integer in [0, n]. Modulo bias is irrelevant at the sizes used.
  std::uint64_t uniform_int(std::uint64_t n) { return eng_() % (n + 1); }

  bool bernoulli(double p) { return uniform01() < p; }

 private:
  std::mt19937_64 eng_;
};

}  // namespace gridmarket
