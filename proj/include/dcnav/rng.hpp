#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace dcnav {

// splitmix64 finalizer. Fully specified bit arithmetic, so results are
// identical across platforms and compilers.
inline uint64_t splitmix64_mix(uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

uint64_t fnv1a64(const void* data, size_t n);
uint64_t fnv1a64(const std::string& s);

// Derives a child seed from a base seed and a salt chain. Used to split
// independent substreams (per epoch, per batch, per episode) so that
// parallel execution order cannot change the draws any stream sees.
uint64_t derive_seed(uint64_t base, std::initializer_list<uint64_t> salts);

// Deterministic counter-based RNG (splitmix64). Not cryptographic.
class RngStream {
 public:
  explicit RngStream(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return splitmix64_mix(state_);
  }

  // Uniform in [0, 1), 53 bits of precision.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) {
    return lo + (hi - lo) * next_double();
  }

  // Unbiased integer in [0, n) via rejection sampling.
  uint64_t next_below(uint64_t n);

  // Inclusive range.
  int64_t uniform_int(int64_t lo, int64_t hi);

  // Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    if (v.size() < 2) return;
    for (size_t i = v.size() - 1; i > 0; --i) {
      size_t j = static_cast<size_t>(next_below(i + 1));
      std::swap(v[i], v[j]);
    }
  }

  // One multinomial draw from a probability vector (CDF walk).
  size_t pick_index(const std::vector<double>& probs);

 private:
  uint64_t state_;
};

}  // namespace dcnav
