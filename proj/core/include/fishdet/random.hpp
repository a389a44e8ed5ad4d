#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace fishdet {

/// Stable derivation of a per-stream seed from a base seed (splitmix64 of
/// the pair), so independent consumers never share a generator.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

/// Seeded generator with the sampling helpers used across the toolkit.
/// All draws are explicit formulas over the raw 64-bit stream, so a given
/// seed reproduces the same sequence everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform integer in [0, n), n > 0. Rejection sampling, no modulo bias.
  std::uint64_t below(std::uint64_t n);

  /// Uniform double in [0, 1).
  double uniform();
  double uniform(double lo, double hi);

  /// Box-Muller normal draw.
  double gaussian(double mean, double stddev);

 private:
  std::mt19937_64 engine_;
};

template <typename T>
void shuffle(std::vector<T>& values, Rng& rng) {
  for (std::size_t i = values.size(); i > 1; --i) {
    std::swap(values[i - 1], values[rng.below(i)]);
  }
}

/// k distinct elements drawn uniformly from pool, in draw order.
std::vector<std::size_t> sample_without_replacement(
    const std::vector<std::size_t>& pool, std::size_t k, Rng& rng);

}  // namespace fishdet
