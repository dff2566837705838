#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace podsim {

// Deterministic RNG used everywhere in the simulator. All draws go through
// the explicit helpers below so that results depend only on the seed and the
// call sequence, never on library-specific distribution internals.
class Rng {
 public:
  Rng() : engine_(0) {}
  explicit Rng(uint64_t seed) : engine_(seed) {}

  void reseed(uint64_t seed) { engine_.seed(seed); }

  uint64_t next_u64() { return engine_(); }

  // Uniform integer in [0, bound). bound must be > 0.
  uint64_t below(uint64_t bound) {
    // Rejection sampling to avoid modulo bias.
    const uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    uint64_t v = engine_();
    while (v >= limit) v = engine_();
    return v % bound;
  }

  // Uniform integer in [lo, hi] inclusive.
  uint64_t between(uint64_t lo, uint64_t hi) {
    return lo + below(hi - lo + 1);
  }

  // Uniform real in [0, 1).
  double real01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  bool chance(double p) { return real01() < p; }

  // Exponential inter-arrival time with the given mean, in the same unit.
  double exponential(double mean) {
    double u = real01();
    while (u <= 0.0) u = real01();
    return -mean * std::log(u);
  }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace podsim
