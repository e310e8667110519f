#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace laughflow {

// splitmix64 finalizer; used to turn (seed, stream) pairs into well-spread
// engine seeds so sibling streams are decorrelated even for small seeds.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return mix64(seed ^ mix64(stream + 1));
}

// Deterministic RNG with hand-pinned output mappings. The engine is
// std::mt19937_64 but every distribution below is implemented here so that
// draws are bit-stable across platforms and standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  static Rng from(std::uint64_t seed, std::uint64_t stream) {
    return Rng(derive_seed(seed, stream));
  }

  // Child generator; advances this one by a single draw.
  Rng fork() { return Rng(mix64(next_u64())); }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53-bit resolution.
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t uniform_int(std::uint64_t n) { return next_u64() % n; }

  // Standard normal via Box-Muller; the second value of each pair is cached.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]; keeps log() finite
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Shifted Poisson; rejection-free inversion by sequential search, fine for
  // the small rates used here.
  int poisson(double rate) {
    const double limit = std::exp(-rate);
    double prod = uniform();
    int k = 0;
    while (prod > limit) {
      prod *= uniform();
      ++k;
    }
    return k;
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace laughflow
