#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace ocvit {

/// Deterministic 64-bit-state generator (SplitMix64, Steele et al. / Vigna).
/// A fixed seed yields the same stream on every run; Gaussian variates use
/// the basic Box-Muller transform so the draw count per sample is fixed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), state_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1), 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Unbiased integer in [0, n) via 128-bit multiply.
  std::uint64_t bounded(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  /// One N(mu, sigma^2) variate. Consumes a full Box-Muller pair and
  /// discards the sine branch, keeping the stream position predictable.
  double normal(double mu = 0.0, double sigma = 1.0);

  /// Fills out with i.i.d. N(mu, sigma^2) values, two per Box-Muller pair.
  void fill_gaussian(std::span<double> out, double mu, double sigma);

  void shuffle(std::span<std::size_t> indices);

  /// Child generator for worker/run derivation:
  /// child seed = splitmix64 scramble of (seed XOR (index+1)*0x9E3779B97F4A7C15).
  Rng split(std::uint64_t index) const;

 private:
  std::uint64_t seed_;
  std::uint64_t state_;
};

std::vector<std::size_t> iota_indices(std::size_t n);

}  // namespace ocvit
