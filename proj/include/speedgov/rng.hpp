#pragma once

#include <cstdint>
#include <vector>

#include "speedgov/math/special.hpp"

namespace speedgov {

// Counter-based generator: every variate is a pure function of (seed, keys...),
// so generation order and threading cannot change a panel. The mixing function
// is the splitmix64 finalizer applied to a running hash of the keys.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::uint64_t bits(std::uint64_t k1, std::uint64_t k2 = 0,
                     std::uint64_t k3 = 0, std::uint64_t k4 = 0) const {
    std::uint64_t h = mix(seed_ ^ 0x243f6a8885a308d3ull);
    h = mix(h ^ k1);
    h = mix(h ^ k2);
    h = mix(h ^ k3);
    h = mix(h ^ k4);
    return h;
  }

  // Uniform in (0,1): top 53 bits, offset by half an ulp so 0 is excluded.
  double uniform(std::uint64_t k1, std::uint64_t k2 = 0, std::uint64_t k3 = 0,
                 std::uint64_t k4 = 0) const {
    return (static_cast<double>(bits(k1, k2, k3, k4) >> 11) + 0.5) *
           (1.0 / 9007199254740992.0);
  }

  double normal(std::uint64_t k1, std::uint64_t k2 = 0, std::uint64_t k3 = 0,
                std::uint64_t k4 = 0) const {
    return normal_quantile(uniform(k1, k2, k3, k4));
  }

  bool bernoulli(double p, std::uint64_t k1, std::uint64_t k2 = 0,
                 std::uint64_t k3 = 0, std::uint64_t k4 = 0) const {
    return uniform(k1, k2, k3, k4) < p;
  }

  // Uniform integer in [0, n) by rejection-free 128-bit multiply.
  std::uint64_t below(std::uint64_t n, std::uint64_t k1, std::uint64_t k2 = 0,
                      std::uint64_t k3 = 0, std::uint64_t k4 = 0) const {
    const unsigned __int128 wide =
        static_cast<unsigned __int128>(bits(k1, k2, k3, k4)) * n;
    return static_cast<std::uint64_t>(wide >> 64);
  }

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
};

// Deterministic Fisher-Yates keyed by (rng, stream): identical across
// platforms and standard libraries, unlike std::shuffle.
template <typename T>
void deterministic_shuffle(std::vector<T>& xs, const CounterRng& rng,
                           std::uint64_t stream) {
  for (std::size_t i = xs.size(); i > 1; --i) {
    const std::uint64_t j = rng.below(i, stream, 0x7368756666ull, i);
    std::swap(xs[i - 1], xs[j]);
  }
}

}  // namespace speedgov
