#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace clarify {

/// A named, seeded random stream. Two streams built from the same
/// (seed, name) pair produce identical sequences; different names give
/// statistically independent sequences from one run seed.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::string_view name);

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n). n must be positive.
  std::size_t below(std::size_t n);

  double normal(double mean, double stddev);

  template <typename T>
  void shuffle(std::span<T> items) {
    // Fisher-Yates over below() so the permutation does not depend on the
    // standard library's shuffle implementation.
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

  /// Derives an independent stream, e.g. one per epoch or per sentence.
  RngStream fork(std::string_view name) const;

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

std::uint64_t fnv1a64(std::string_view text);
std::uint64_t splitmix64(std::uint64_t x);

}  // namespace clarify
