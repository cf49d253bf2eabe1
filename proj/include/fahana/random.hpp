#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace fahana {

// splitmix64 finalizer; full-avalanche 64-bit mixer.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline double to_unit_interval(std::uint64_t x) {
  return static_cast<double>(x >> 11) * 0x1.0p-53;
}

// Counter-based generator: a key is built by absorbing words, then any
// counter value maps to an independent uniform draw. Same key + counter
// always yields the same output, which is what makes evaluations pure
// functions of (seed, architecture).
class KeyedStream {
 public:
  explicit KeyedStream(std::uint64_t seed) : key_(mix64(seed)) {}

  void absorb(std::uint64_t word) { key_ = mix64(key_ ^ word); }

  std::uint64_t bits(std::uint64_t counter) const {
    return mix64(key_ + counter * 0x9e3779b97f4a7c15ULL);
  }

  double uniform(std::uint64_t counter) const { return to_unit_interval(bits(counter)); }

 private:
  std::uint64_t key_;
};

// Engine-backed helpers used where a sequential stream is fine
// (controller init, sampling, synthetic data). Drawing raw engine words
// keeps results independent of the standard library's distribution
// implementations.
inline double uniform01(std::mt19937_64& rng) { return to_unit_interval(rng()); }

inline double uniform_range(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

inline double normal01(std::mt19937_64& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

// Categorical draw over explicit probabilities; walks the CDF.
inline int categorical(std::mt19937_64& rng, const std::vector<double>& probs) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size()) - 1;
}

}  // namespace fahana
