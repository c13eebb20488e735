#pragma once

#include <cstdint>
#include <random>

namespace capsim {

// SplitMix64 (Steele, Lea, Flood). Used both as a seed mixer and as a
// counter-based generator: splitmix64 of consecutive counters is the
// generator's output stream, so values are a pure function of the counter.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Derives an independent stream seed from (seed, salt).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  return splitmix64(seed ^ splitmix64(salt));
}

// Top 53 bits -> double in [0,1).
inline double u64_to_unit(std::uint64_t u) {
  return static_cast<double>(u >> 11) * 0x1.0p-53;
}

// Sequential PRNG: std::mt19937_64 with portable output mappings.
// The standard pins mt19937_64 bit-exactly; std::uniform_*_distribution are
// implementation-defined, so the mappings live here instead.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  double uniform01() { return u64_to_unit(eng_()); }

  // Unbiased integer in [0, n). Rejection sampling.
  std::uint64_t uniform_below(std::uint64_t n) {
    const std::uint64_t rem = (UINT64_MAX % n + 1) % n;  // 2^64 mod n
    std::uint64_t x = eng_();
    if (rem != 0) {
      const std::uint64_t max_ok = UINT64_MAX - rem;
      while (x > max_ok) x = eng_();
    }
    return x % n;
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace capsim
