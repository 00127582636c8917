#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace spurnet {

// Counter-based generator (splitmix64 over a keyed counter). Output depends
// only on (seed, stream, draw index), so copies of an Rng replay the same
// sequence and replicas on distinct streams are independent. std:: engines
// are avoided because their real distributions are not bit-stable across
// standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
      : key_(mix(seed + 0x9e3779b97f4a7c15ULL * (stream + 1))), counter_(0) {}

  std::uint64_t next_u64() {
    ++counter_;
    return mix(key_ + 0x9e3779b97f4a7c15ULL * counter_);
  }

  /// Uniform in [0,1) with 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Uniform integer in [0, n). n must be > 0.
  std::size_t below(std::size_t n) {
    // rejection sampling to avoid modulo bias
    std::uint64_t bound = n;
    std::uint64_t threshold = (0ULL - bound) % bound;
    for (;;) {
      std::uint64_t r = next_u64();
      if (r >= threshold) return static_cast<std::size_t>(r % bound);
    }
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = below(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  std::vector<std::size_t> permutation(std::size_t n) {
    std::vector<std::size_t> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = i;
    shuffle(p);
    return p;
  }

  /// k distinct indices drawn from [0, n) without replacement (k <= n).
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k) {
    std::vector<std::size_t> pool(n);
    for (std::size_t i = 0; i < n; ++i) pool[i] = i;
    std::vector<std::size_t> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
      std::size_t j = i + below(n - i);
      std::swap(pool[i], pool[j]);
      out.push_back(pool[i]);
    }
    return out;
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_;
  std::uint64_t counter_;
};

// Fixed stream ids so the per-stage generators never collide.
namespace streams {
inline constexpr std::uint64_t kData = 1;
inline constexpr std::uint64_t kSplit = 2;
inline constexpr std::uint64_t kInit = 3;
inline constexpr std::uint64_t kErm = 4;
inline constexpr std::uint64_t kCluster = 5;
inline constexpr std::uint64_t kTaskData = 6;
inline constexpr std::uint64_t kMaskNoise = 7;
inline constexpr std::uint64_t kBatch = 8;
inline constexpr std::uint64_t kFinetune = 9;
inline constexpr std::uint64_t kEval = 10;
inline constexpr std::uint64_t kRandomMask = 11;
}  // namespace streams

}  // namespace spurnet
