#include "dcnav/rng.hpp"

namespace dcnav {

uint64_t fnv1a64(const void* data, size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  uint64_t h = 0xcbf29ce484222325ULL;
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

uint64_t derive_seed(uint64_t base, std::initializer_list<uint64_t> salts) {
  uint64_t h = splitmix64_mix(base + 0x9e3779b97f4a7c15ULL);
  for (uint64_t s : salts) {
    h = splitmix64_mix(h ^ (s + 0x9e3779b97f4a7c15ULL));
  }
  return h;
}

uint64_t RngStream::next_below(uint64_t n) {
  if (n == 0) return 0;
  // Rejection sampling over the largest multiple of n below 2^64.
  uint64_t threshold = (0 - n) % n;
  for (;;) {
    uint64_t r = next_u64();
    if (r >= threshold) return r % n;
  }
}

int64_t RngStream::uniform_int(int64_t lo, int64_t hi) {
  if (hi < lo) return lo;
  uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
  return lo + static_cast<int64_t>(next_below(span));
}

size_t RngStream::pick_index(const std::vector<double>& probs) {
  double u = next_double();
  double acc = 0.0;
  for (size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  return probs.empty() ? 0 : probs.size() - 1;
}

}  // namespace dcnav
