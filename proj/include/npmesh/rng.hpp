#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace npmesh {

// mt19937_64 with hand-rolled draws so that streams are identical across
// standard library implementations.
class Rng {
public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // uniform in [0, 1)
  double uniform() { return (next_u64() >> 11) * 0x1.0p-53; }

  // uniform in [lo, hi)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n)
  uint64_t uniform_index(uint64_t n) { return next_u64() % n; }

private:
  std::mt19937_64 gen_;
};

// FNV-1a, used for deterministic dataset splits.
inline uint64_t fnv1a(std::string_view s, uint64_t seed = 0xcbf29ce484222325ull) {
  uint64_t h = seed;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

} // namespace npmesh
