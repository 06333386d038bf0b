#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace wormloc {

// Deterministic random source. Only the raw 64-bit engine output is taken
// from the standard library; the distributions are defined here so that a
// seed produces the same stream on every standard library implementation.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n), rejection sampled so there is no modulo bias.
  std::uint64_t below(std::uint64_t n);

  // Standard normal via Box-Muller; draws two uniforms per call.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  // FNV-1a over the serialized engine state.
  std::uint64_t digest() const;

 private:
  std::mt19937_64 engine_;
};

// splitmix64 finalizer; used to derive independent per-item seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace wormloc
