#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace procgcn {

// Deterministic random source. All draws go through fixed bit-level mappings
// instead of std:: distributions, so a seed reproduces the same stream on any
// platform/standard library. Named substreams let one root seed drive
// independent stages (prepare/tune/train) without coupling their draw counts.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  Rng(std::uint64_t root, std::string_view tag, std::uint64_t index = 0)
      : engine_(mix(root, tag, index)) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform double in [0, 1).
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  /// Log-uniform double in [lo, hi), lo > 0.
  double log_uniform(double lo, double hi);

  /// Uniform integer in [lo, hi] via rejection (unbiased).
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  /// Bernoulli draw.
  bool flip(double p = 0.5) { return next_double() < p; }

  /// Uniform pick from a non-empty list.
  template <typename T>
  const T& pick(const std::vector<T>& items) {
    return items[static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(items.size()) - 1))];
  }

  /// In-place Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      auto j = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(items[i - 1], items[j]);
    }
  }

  /// Standard normal via Box-Muller.
  double normal();

  /// Stable 64-bit mix of a root seed, a stage tag, and an index.
  static std::uint64_t mix(std::uint64_t root, std::string_view tag, std::uint64_t index = 0);

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace procgcn
