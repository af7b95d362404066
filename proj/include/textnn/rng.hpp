#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "textnn/errors.hpp"

namespace textnn {

// Counter-based generator (splitmix64). Pure integer arithmetic, so a seed
// yields the same draw sequence on every platform; std::* distributions do
// not give that guarantee.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // [0, 1), 53-bit resolution.
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) {
    if (!(lo < hi)) throw ContractError("uniform: requires lo < hi");
    return lo + (hi - lo) * uniform01();
  }

  // Box-Muller; one normal per call (the sine twin is discarded so the
  // consumed-draw count per call is fixed).
  double normal(double sigma) {
    double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
    double u2 = uniform01();
    return sigma * std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  // Resamples until the draw lies within two standard deviations.
  double truncated_normal(double sigma) {
    if (sigma == 0.0) return 0.0;
    for (;;) {
      double z = normal(sigma);
      if (std::fabs(z) <= 2.0 * sigma) return z;
    }
  }

  // Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw ContractError("Rng::below: n must be positive");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    for (;;) {
      std::uint64_t v = next_u64();
      if (v < limit) return v % n;
    }
  }

  // Independent deterministic stream for a named purpose.
  Rng fork(std::uint64_t tag) const {
    Rng mix(state_ ^ (0xA0761D6478BD642FULL * (tag + 1)));
    mix.next_u64();
    return mix;
  }

 private:
  std::uint64_t state_;
};

// In-place Fisher-Yates driven by Rng, for deterministic shuffles.
template <typename T>
void shuffle(std::vector<T>& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace textnn
