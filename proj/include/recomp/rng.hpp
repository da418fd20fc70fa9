// Seedable xoshiro256** generator. All randomness in the project (weight
// init, shuffling, sampling, test data) flows through this type so that a
// fixed seed gives bit-identical results on any platform; the C++ standard
// distributions are avoided because their output is implementation-defined.

#pragma once

#include <bit>
#include <cstdint>
#include <vector>

namespace recomp {

inline uint64_t splitmix64(uint64_t& x) {
  x += 0x9E3779B97F4A7C15ULL;
  uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

class Rng {
 public:
  explicit Rng(uint64_t seed) {
    uint64_t s = seed;
    for (auto& w : state_) w = splitmix64(s);
  }

  uint64_t next_u64() {
    const uint64_t result = std::rotl(state_[1] * 5, 7) * 9;
    const uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = std::rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0,1) with 53-bit resolution.
  double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Uniform in [0,n), unbiased via power-of-two rejection.
  uint64_t next_below(uint64_t n) {
    const uint64_t mask = ~0ULL >> std::countl_zero(n | 1);
    uint64_t r;
    do {
      r = next_u64() & mask;
    } while (r >= n);
    return r;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = size_t(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Derives an independent substream seed (e.g. one per generated measure).
  static uint64_t derive(uint64_t seed, uint64_t stream) {
    uint64_t x = seed ^ (0xA0761D6478BD642FULL * (stream + 1));
    return splitmix64(x);
  }

 private:
  uint64_t state_[4];
};

}  // namespace recomp
