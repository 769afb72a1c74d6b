#include "fmtk/common/rng.hpp"

#include <stdexcept>

namespace fmtk {

namespace {

inline uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace

Rng::Rng(uint64_t seed) {
  uint64_t s = seed;
  for (auto& w : state_) w = splitmix64(s);
}

uint64_t Rng::next() {
  const uint64_t result = rotl(state_[1] * 5, 7) * 9;
  const uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl(state_[3], 45);
  return result;
}

double Rng::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

int64_t Rng::uniform_int(int64_t lo, int64_t hi) {
  if (lo > hi) throw std::invalid_argument("uniform_int: lo > hi");
  const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
  if (span == 0) return static_cast<int64_t>(next());  // full 64-bit range
  // Multiply-shift mapping; bias is O(span / 2^64), irrelevant here.
  const uint64_t r = static_cast<uint64_t>(
      (static_cast<__uint128_t>(next()) * span) >> 64);
  return lo + static_cast<int64_t>(r);
}

std::size_t Rng::index(std::size_t n) {
  if (n == 0) throw std::invalid_argument("Rng::index: empty range");
  return static_cast<std::size_t>(uniform_int(0, static_cast<int64_t>(n) - 1));
}

uint64_t Rng::mix(uint64_t seed, uint64_t stream) {
  uint64_t s = seed ^ (0x9E3779B97F4A7C15ull * (stream + 0x655F0CC8F0C94E2Dull));
  uint64_t a = splitmix64(s);
  uint64_t b = splitmix64(s);
  return a ^ rotl(b, 23);
}

uint64_t Rng::mix(uint64_t seed, uint64_t a, uint64_t b) {
  return mix(mix(seed, a), b);
}

}  // namespace fmtk
