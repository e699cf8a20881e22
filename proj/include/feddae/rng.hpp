#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace feddae {

// Counter-free splitmix64 stream. All randomness in the project flows from
// one root seed through named substreams (see derive_stream), so any client,
// round, or pipeline stage can be replayed in isolation.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 bits of mantissa.
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in {0, 1, ..., n-1}, unbiased by rejection.
  uint64_t below(uint64_t n) {
    const uint64_t threshold = (0ULL - n) % n;
    for (;;) {
      const uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  // Standard normal draw, polar Box-Muller with one cached spare.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

inline uint64_t mix64(uint64_t x) {
  x ^= x >> 33;
  x *= 0xff51afd7ed558ccdULL;
  x ^= x >> 33;
  x *= 0xc4ceb9fe1a85ec53ULL;
  x ^= x >> 33;
  return x;
}

// Derive an independent substream from the root seed and a tag path,
// e.g. derive_stream(seed, {kStreamClient, round, client_id}).
inline Rng derive_stream(uint64_t root, std::initializer_list<uint64_t> tags) {
  uint64_t s = mix64(root + 0x632be59bd9b4e019ULL);
  for (uint64_t t : tags) s = mix64(s ^ (t + 0x9e3779b97f4a7c15ULL));
  return Rng(s);
}

// Stream tags. Fixed constants so runs are reproducible across builds.
enum StreamTag : uint64_t {
  kStreamSplit = 1,
  kStreamNegatives = 2,
  kStreamInitGlobal = 3,
  kStreamInitClient = 4,
  kStreamClient = 5,      // per (round, client): dropout mask + reparam noise
  kStreamSample = 6,      // per round: client selection
  kStreamNoise = 7,       // per (round, client): gradient noise
  kStreamCentral = 8,     // per epoch: minibatch shuffling
};

}  // namespace feddae
