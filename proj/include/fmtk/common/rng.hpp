#pragma once

#include <cstdint>
#include <vector>

namespace fmtk {

// All randomness in the toolkit flows through this generator so that runs
// are bit-reproducible across platforms. std::mt19937 plus the standard
// distributions would not be: the distribution algorithms are
// implementation-defined.
//
// Core generator: xoshiro256** seeded via splitmix64.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  uint64_t next();

  // Uniform double in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);

  // Uniform integer in [lo, hi], both bounds inclusive.
  int64_t uniform_int(int64_t lo, int64_t hi);

  // Uniform index in [0, n). n must be > 0.
  std::size_t index(std::size_t n);

  // Fisher-Yates; std::shuffle is implementation-defined, this is not.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  // Derives a decorrelated stream id from a base seed and a stream index.
  // Used to give every (dataset, sample), (epoch, sample), ... pair its own
  // generator independent of iteration order or threading.
  static uint64_t mix(uint64_t seed, uint64_t stream);
  static uint64_t mix(uint64_t seed, uint64_t a, uint64_t b);

 private:
  uint64_t state_[4];
};

}  // namespace fmtk
