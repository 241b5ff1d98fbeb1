#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace okdad::rng {

// Reproducibility requirement: identical seeds must give identical results on
// every OS and standard library. std::uniform_real_distribution et al. are
// implementation-defined, so we generate variates from raw bits ourselves.

inline uint64_t mix64(uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

constexpr uint64_t kGolden = 0x9E3779B97F4A7C15ull;

/// Derive a child key from a root seed and a path of stream identifiers.
/// Used to fan a single run seed out to independent consumers.
inline uint64_t derive(uint64_t root, std::initializer_list<uint64_t> path) {
  uint64_t k = mix64(root + kGolden);
  for (uint64_t e : path) k = mix64(k ^ mix64(e + kGolden));
  return k;
}

/// Counter-based generator: output i is mix64(key + i*golden). Streams with
/// different keys are independent; state is two words and trivially copyable.
struct Stream {
  uint64_t key = 0;
  uint64_t ctr = 0;

  Stream() = default;
  explicit Stream(uint64_t k) : key(k) {}

  uint64_t next_u64() { return mix64(key + (++ctr) * kGolden); }

  /// Uniform double in [0, 1), 53 mantissa bits.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double a, double b) { return a + (b - a) * next_double(); }

  /// Uniform integer in [0, n), n >= 1.
  int64_t next_below(int64_t n) {
    // Multiply-shift; bias is negligible for n << 2^64 and is identical
    // everywhere, which is what matters here.
    return static_cast<int64_t>(
        (static_cast<unsigned __int128>(next_u64()) *
         static_cast<unsigned __int128>(n)) >> 64);
  }

  /// Standard normal via Box-Muller. Always consumes two uniforms.
  double normal() {
    double u1 = next_double();
    double u2 = next_double();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }
};

}  // namespace okdad::rng
