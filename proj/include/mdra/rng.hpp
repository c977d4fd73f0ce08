#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace mdra {

namespace detail {
inline uint64_t splitmix64(uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
inline uint64_t hash_str(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}
}  // namespace detail

/// Deterministic random stream. Streams are addressed by a root seed, a
/// purpose label, and up to three indices, so independent sub-streams can be
/// handed to parallel workers without any ordering dependence. Gaussian
/// sampling is hand-rolled (Box-Muller) so results do not depend on the
/// standard library's distribution implementation.
class RngStream {
 public:
  RngStream(uint64_t seed, std::string_view purpose, uint64_t i0 = 0,
            uint64_t i1 = 0, uint64_t i2 = 0) {
    uint64_t s = seed ^ detail::hash_str(purpose);
    s ^= 0x9e3779b97f4a7c15ULL * (i0 + 1);
    s ^= 0xc2b2ae3d27d4eb4fULL * (i1 + 1);
    s ^= 0x165667b19e3779f9ULL * (i2 + 1);
    uint64_t st = s;
    gen_.seed(detail::splitmix64(st));
  }

  uint64_t next_u64() { return gen_(); }

  /// Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  int uniform_int(int n) {
    return static_cast<int>(gen_() % static_cast<uint64_t>(n));
  }

  /// Standard normal via Box-Muller.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  /// Sampled index from a discrete probability vector (assumed to sum to 1).
  template <typename Vec>
  int categorical(const Vec& p) {
    double u = uniform();
    double acc = 0.0;
    int last = -1;
    for (int i = 0; i < static_cast<int>(p.size()); ++i) {
      if (p[i] <= 0.0) continue;
      acc += p[i];
      last = i;
      if (u < acc) return i;
    }
    return last;  // u landed in the round-off tail
  }

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace mdra
