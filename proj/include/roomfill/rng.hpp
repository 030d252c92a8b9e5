#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace roomfill {

// Counter-free PRNG used everywhere randomness is needed. The state is a
// single u64, so streams are trivially serializable and cheap to fork.
// Reproducibility contracts in this project rely on never touching
// <random> distributions (their internal state is implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    // splitmix64
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state() const { return state_; }
  void set_state(std::uint64_t s) { state_ = s; }

  // Uniform in [0, 1).
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n), unbiased (Lemire with rejection).
  std::uint64_t uniform_int(std::uint64_t n) {
    if (n == 0) return 0;
    std::uint64_t x = next_u64();
    __uint128_t m = __uint128_t(x) * __uint128_t(n);
    std::uint64_t l = std::uint64_t(m);
    if (l < n) {
      std::uint64_t t = (0 - n) % n;
      while (l < t) {
        x = next_u64();
        m = __uint128_t(x) * __uint128_t(n);
        l = std::uint64_t(m);
      }
    }
    return std::uint64_t(m >> 64);
  }

  int uniform_index(int n) { return int(uniform_int(std::uint64_t(n))); }

  // Standard normal via Box-Muller; stateless (no cached spare).
  double normal() {
    double u1 = 0.0;
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = uniform_int(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
};

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Derives an independent stream for (seed, tag). Used for per-sample and
// per-subsystem seeding so streams never alias.
inline std::uint64_t derive_seed(std::uint64_t seed, const std::string& tag) {
  Rng r(seed ^ fnv1a64(tag));
  return r.next_u64();
}

inline std::uint64_t derive_seed(std::uint64_t seed, const std::string& tag, std::uint64_t index) {
  Rng r(seed ^ fnv1a64(tag) ^ (0x9e3779b97f4a7c15ULL * (index + 1)));
  return r.next_u64();
}

}  // namespace roomfill
