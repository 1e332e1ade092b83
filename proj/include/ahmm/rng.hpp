#pragma once

#include <cstdint>
#include <span>

namespace ahmm {

// Counter-style splittable random streams.
//
// Reproducibility contract: every stochastic component draws from a stream
// keyed by (master seed, stable labels) -- e.g. (seed, particle slot, step).
// Results are then independent of scheduling, so a filter run is bit-identical
// whether particles are processed by one worker or many.
//
// The generator is splitmix64 over a key-mixed initial state. std::mt19937_64
// is not used here because constructing one engine per (particle, step) key is
// far heavier than the few draws each stream serves.
class RngStream {
 public:
  explicit RngStream(uint64_t seed) : state_(mix(seed ^ 0x9e3779b97f4a7c15ull)) {}
  RngStream(uint64_t seed, uint64_t a) : RngStream(combine(seed, a)) {}
  RngStream(uint64_t seed, uint64_t a, uint64_t b) : RngStream(combine(combine(seed, a), b)) {}
  RngStream(uint64_t seed, uint64_t a, uint64_t b, uint64_t c)
      : RngStream(combine(combine(combine(seed, a), b), c)) {}

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    return mix(state_);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Index sampled by inverse CDF over (possibly unnormalised) non-negative
  // weights. Falls back to the last positive entry when rounding pushes the
  // cursor past the total mass.
  int categorical(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    double u = uniform() * total;
    double acc = 0.0;
    int last_positive = 0;
    for (size_t i = 0; i < weights.size(); ++i) {
      if (weights[i] <= 0.0) continue;
      acc += weights[i];
      last_positive = static_cast<int>(i);
      if (u < acc) return last_positive;
    }
    return last_positive;
  }

  bool bernoulli(double p) { return uniform() < p; }

  static uint64_t combine(uint64_t key, uint64_t salt) {
    return mix(key + 0x9e3779b97f4a7c15ull * (salt + 1));
  }

 private:
  static uint64_t mix(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  uint64_t state_;
};

}  // namespace ahmm
