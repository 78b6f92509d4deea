#pragma once

// Seeded random streams for the simulator. Every stream is derived from the
// scenario seed plus a name and an index, so runs are reproducible and the
// consumption order of one stream cannot disturb another. Gaussian draws
// use Box-Muller on raw 64-bit output, keeping results independent of the
// standard library's distribution implementations.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>

namespace radfuse::rng {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Stable 64-bit stream id from (seed, tag, index).
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag, std::uint64_t index) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ull;
  }
  std::uint64_t state = base ^ h;
  state ^= splitmix64(state) + index * 0x9E3779B97F4A7C15ull;
  return splitmix64(state);
}

class Stream {
 public:
  explicit Stream(std::uint64_t seed) : engine_(seed) {}
  Stream(std::uint64_t base, std::string_view tag, std::uint64_t index = 0)
      : engine_(derive_seed(base, tag, index)) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double gaussian(double sigma = 1.0, double mean = 0.0) {
    const double u1 = uniform();
    const double u2 = uniform();
    const double mag = std::sqrt(-2.0 * std::log1p(-u1));
    return mean + sigma * mag * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Zero-mean Gaussian truncated to [-bound, bound] by rejection.
  double gaussian_trunc(double sigma, double bound) {
    if (sigma <= 0) return 0.0;
    for (;;) {
      const double x = gaussian(sigma);
      if (std::abs(x) <= bound) return x;
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace radfuse::rng
