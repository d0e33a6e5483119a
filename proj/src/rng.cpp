#include "ocvit/rng.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <utility>

namespace ocvit {

namespace {

// One Box-Muller pair. u1 is shifted into (0, 1] so the log is finite.
std::pair<double, double> normal_pair(Rng& rng) {
  double u1 = static_cast<double>((rng.next_u64() >> 11) + 1) * 0x1.0p-53;
  double u2 = static_cast<double>(rng.next_u64() >> 11) * 0x1.0p-53;
  double r = std::sqrt(-2.0 * std::log(u1));
  double t = 2.0 * std::numbers::pi * u2;
  return {r * std::cos(t), r * std::sin(t)};
}

}  // namespace

double Rng::normal(double mu, double sigma) {
  auto [z0, z1] = normal_pair(*this);
  (void)z1;
  return mu + sigma * z0;
}

void Rng::fill_gaussian(std::span<double> out, double mu, double sigma) {
  std::size_t i = 0;
  while (i < out.size()) {
    auto [z0, z1] = normal_pair(*this);
    out[i++] = mu + sigma * z0;
    if (i < out.size()) out[i++] = mu + sigma * z1;
  }
}

void Rng::shuffle(std::span<std::size_t> indices) {
  if (indices.size() < 2) return;
  for (std::size_t i = indices.size() - 1; i > 0; --i) {
    std::size_t j = bounded(i + 1);
    std::swap(indices[i], indices[j]);
  }
}

Rng Rng::split(std::uint64_t index) const {
  std::uint64_t x = seed_ ^ ((index + 1) * 0x9E3779B97F4A7C15ull);
  // SplitMix64 scramble of x, one advance.
  std::uint64_t z = x + 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  z ^= z >> 31;
  return Rng(z);
}

std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

}  // namespace ocvit
