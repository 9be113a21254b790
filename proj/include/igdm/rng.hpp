#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>
#include <vector>

namespace igdm {

namespace detail {

inline uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace detail

// Deterministic RNG. mt19937_64 is fully specified by the standard; the
// distributions are hand-rolled because the std ones are not, and re-run
// reproducibility is a hard contract here.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  // Named sub-stream of a root seed. Components draw from disjoint streams so
  // toggling one never perturbs another's randomness.
  static Rng substream(uint64_t root_seed, std::string_view name) {
    uint64_t state = root_seed ^ detail::fnv1a64(name);
    uint64_t s = detail::splitmix64(state);
    return Rng(s);
  }

  static uint64_t derive_seed(uint64_t root_seed, std::string_view name, uint64_t index = 0) {
    uint64_t state = root_seed ^ detail::fnv1a64(name) ^ (0x9e3779b97f4a7c15ull * (index + 1));
    return detail::splitmix64(state);
  }

  uint64_t next_u64() { return gen_(); }

  // Uniform on [0, 1): 53 random mantissa bits.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform index in [0, n). Rejection keeps the draw unbiased.
  size_t uniform_index(size_t n) {
    if (n == 0) return 0;
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
      x = gen_();
    } while (x >= limit);
    return static_cast<size_t>(x % n);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Standard normal via Box-Muller; the spare value is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = uniform_index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace igdm
