#ifndef SELFRANK_RANDOM_HPP_
#define SELFRANK_RANDOM_HPP_

#include <cmath>
#include <cstdint>
#include <string_view>

namespace selfrank {

// Deterministic counter-based random stream (SplitMix64 core). Every random
// decision in the pipeline flows from one of these, derived from the master
// seed, so results do not depend on platform library internals or on
// scheduling order.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform double in [0, 1), 53 bits of entropy.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform index in [0, n). n == 0 returns 0. Rejection sampling, no
  // modulo bias.
  std::size_t next_index(std::size_t n) {
    if (n <= 1) return 0;
    const std::uint64_t bound = n;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t v;
    do {
      v = next_u64();
    } while (v >= limit);
    return static_cast<std::size_t>(v % bound);
  }

  // Standard normal via Box-Muller.
  double next_gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = next_double();
    double u2 = next_double();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

 private:
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// 64-bit FNV-1a over arbitrary bytes; used for stream derivation and config
// digests.
inline std::uint64_t fnv1a64(std::string_view bytes,
                             std::uint64_t seed = 0xcbf29ce484222325ull) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// Seed for (master seed, stage, qid). Parallel per-question work draws from
// streams derived this way, so scheduling order never changes results.
inline std::uint64_t derive_seed(std::uint64_t master_seed, std::string_view stage,
                                 std::string_view qid) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (int i = 0; i < 8; ++i) {
    h ^= (master_seed >> (8 * i)) & 0xff;
    h *= 0x100000001b3ull;
  }
  h = fnv1a64(stage, h);
  h ^= 0x1f;
  h *= 0x100000001b3ull;
  h = fnv1a64(qid, h);
  return h;
}

inline RngStream derive_stream(std::uint64_t master_seed, std::string_view stage,
                               std::string_view qid) {
  return RngStream(derive_seed(master_seed, stage, qid));
}

}  // namespace selfrank

#endif  // SELFRANK_RANDOM_HPP_
