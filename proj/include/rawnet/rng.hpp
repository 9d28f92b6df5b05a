#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <utility>

namespace rawnet {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Folds a sequence of integers into one 64-bit key. Order matters.
inline constexpr std::uint64_t hash_key(std::initializer_list<std::uint64_t> parts) noexcept {
  std::uint64_t h = 0x6a09e667f3bcc908ULL;
  for (std::uint64_t p : parts) h = splitmix64(h ^ splitmix64(p));
  return h;
}

/// Counter-based generator: the stream is a pure function of its key, so any
/// worker that rebuilds the key reproduces the same draws. Distributions are
/// implemented here rather than via <random> so results are identical across
/// standard libraries.
class StreamRng {
 public:
  explicit StreamRng(std::uint64_t key) noexcept : key_(key) {}
  StreamRng(std::initializer_list<std::uint64_t> parts) noexcept : key_(hash_key(parts)) {}

  std::uint64_t next_u64() noexcept { return splitmix64(key_ ^ splitmix64(counter_++)); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  bool bernoulli(double p) noexcept { return uniform() < p; }

  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n) noexcept {
    // Lemire-style rejection keeps the draw unbiased.
    std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  /// Standard normal via Box-Muller; caches the second variate.
  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    double mag = std::sqrt(-2.0 * std::log(u1));
    spare_ = mag * std::sin(2.0 * std::numbers::pi * u2);
    has_spare_ = true;
    return mag * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Fisher-Yates shuffle driven by StreamRng (std::shuffle is not portable
/// across standard library implementations).
template <typename Container>
void deterministic_shuffle(Container& c, StreamRng& rng) {
  for (std::size_t i = c.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.below(i));
    using std::swap;
    swap(c[i - 1], c[j]);
  }
}

}  // namespace rawnet
