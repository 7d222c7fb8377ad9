#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

#include "fedsim/errors.hpp"

namespace fedsim {

// Deterministic generator shared by every randomized module. The algorithm is
// xoshiro256** seeded through splitmix64, so identical (seed, labels) produce
// identical streams on every platform. Substreams are derived by mixing
// integer labels (client id, round, ...) into the seed before expansion.
class Rng {
 public:
  explicit Rng(uint64_t root_seed) : Rng(root_seed, {}) {}

  Rng(uint64_t root_seed, std::span<const uint64_t> labels);
  Rng(uint64_t root_seed, std::initializer_list<uint64_t> labels)
      : Rng(root_seed, std::span<const uint64_t>(labels.begin(), labels.end())) {}

  // Raw xoshiro256** output.
  uint64_t next_u64();

  // Uniform in [0, bound) via rejection sampling, bias free. bound must be > 0.
  uint64_t next_below(uint64_t bound);

  // Uniform double in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);

  // Standard normal via Box-Muller (both values used, so draws come in a
  // fixed cadence regardless of caller pattern).
  double normal();

  // Gamma(shape, 1) via Marsaglia-Tsang; shape < 1 handled by boosting.
  double gamma(double shape);

  // In-place Fisher-Yates.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // [0, n) shuffled.
  std::vector<size_t> permutation(size_t n);

 private:
  uint64_t state_[4];
  bool has_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

}  // namespace fedsim
