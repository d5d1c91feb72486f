#pragma once

#include <cstdint>

namespace dcpo {

/// splitmix64: cheap, well-mixed stream used to derive per-worker seeds and
/// to drive sampling. Hand-rolled so rollouts are bit-reproducible across
/// standard library implementations.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform draw in [0, 1) with 53 bits of precision.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t state_;
};

/// Mixes several integers into one seed (run seed + step + query index).
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0) {
  SplitMix64 s(a ^ 0x2545f4914f6cdd1dULL);
  std::uint64_t x = s.next() ^ b;
  SplitMix64 t(x);
  std::uint64_t y = t.next() ^ c;
  SplitMix64 u(y);
  return u.next();
}

}  // namespace dcpo
