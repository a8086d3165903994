// Deterministic random numbers. mt19937_64 is specified bit-exactly by the
// standard; the distributions here are hand-rolled because std:: distribution
// output is implementation-defined and would break cross-toolchain
// reproducibility of corpora and checkpoints.
#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "mddkit/common.hpp"

namespace mddkit {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform() { return double(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Inclusive integer range via rejection-free modulo of a wide draw.
  // Bias is < 2^-53 for the small ranges used here.
  int uniform_int(int lo, int hi) {
    return lo + int(uniform() * double(hi - lo + 1));
  }

  // Standard normal via Box-Muller. One value per call; no caching so the
  // draw sequence is a pure function of call count.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

  // Derives an independent stream seed, e.g. per utterance id (splitmix64).
  static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace mddkit
