#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "ncopt/common.hpp"

namespace ncopt {

// Deterministic RNG used everywhere in place of std::distributions, whose
// outputs differ across standard library implementations. All draws are
// derived from raw mt19937_64 words so streams are bit-reproducible across
// platforms for a given seed.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_base_(seed), gen_(splitmix64(seed)) {}

  uint64_t next() { return gen_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Modulo bias is below 2^-50 for the sizes used
  // here and keeps the draw a single deterministic word.
  int uniform_int(int n) {
    NC_REQUIRE(n > 0, "uniform_int: n must be positive, got " << n);
    return static_cast<int>(next() % static_cast<uint64_t>(n));
  }

  // Independent substream; children with distinct ids never share state with
  // the parent or each other regardless of interleaving.
  Rng child(uint64_t stream_id) const {
    return Rng(splitmix64(seed_base_ ^ (0x9e3779b97f4a7c15ULL * (stream_id + 1))));
  }

  // Index draw from unnormalized non-negative weights.
  int sample_weighted(const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) {
      NC_REQUIRE(w >= 0.0, "sample_weighted: negative weight " << w);
      total += w;
    }
    NC_REQUIRE(total > 0.0, "sample_weighted: all weights are zero");
    double u = uniform() * total;
    double cum = 0.0;
    int last_positive = -1;
    for (size_t i = 0; i < weights.size(); ++i) {
      if (weights[i] <= 0.0) continue;
      last_positive = static_cast<int>(i);
      cum += weights[i];
      if (u < cum) return static_cast<int>(i);
    }
    return last_positive;  // guards rounding at u == total
  }

 private:
  static uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  uint64_t seed_base_;
  std::mt19937_64 gen_;
};

}  // namespace ncopt
