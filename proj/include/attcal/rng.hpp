#pragma once

#include <cmath>
#include <cstdint>

namespace attcal {

// Counter-free splitmix generator with cheaply derivable substreams.
//
// Each (master_seed, stream_id) pair yields an independent, reproducible
// stream, so replicate r of a run can always use stream r regardless of how
// replicates are scheduled across workers.  Normal variates are produced by
// the Box-Muller transform with no caching, so every draw consumes a fixed
// number of raw 64-bit words and streams stay aligned.
class Rng {
 public:
  explicit Rng(std::uint64_t master_seed, std::uint64_t stream_id = 0) {
    // Whiten the seed and fold in the stream id through two mix rounds so
    // that nearby (seed, stream) pairs land far apart in state space.
    std::uint64_t s = mix(master_seed + 0x9E3779B97F4A7C15ULL);
    s ^= mix(stream_id + 0xBF58476D1CE4E5B9ULL);
    state_ = mix(s);
  }

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix(state_);
  }

  // Uniform on [0, 1): 53 random mantissa bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller (two uniforms per draw, no caching).
  double normal() {
    double u1 = 1.0 - uniform();  // in (0, 1], keeps log() finite
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  // Unbiased integer in [0, bound) by rejection sampling.
  std::uint64_t uniform_int(std::uint64_t bound) {
    const std::uint64_t threshold = (0ULL - bound) % bound;
    for (;;) {
      std::uint64_t r = next_u64();
      if (r >= threshold) return r % bound;
    }
  }

  int bernoulli(double p) { return uniform() < p ? 1 : 0; }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
};

}  // namespace attcal
