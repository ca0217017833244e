#pragma once

#include <cstdint>

namespace geoctx {

/// Pinned pseudo-random generator so seeded sequences are reproducible across
/// platforms and implementations.
///
/// State init:  s = splitmix64(seed); if s == 0 then s = 0x9E3779B97F4A7C15.
/// next_u64:    s ^= s >> 12; s ^= s << 25; s ^= s >> 27;
///              return s * 0x2545F4914F6CDD1D            (xorshift64*)
/// below(n):    high 64 bits of the 128-bit product next_u64() * n
/// uniform():   (next_u64() >> 11) * 2^-53, in [0, 1)
/// normal():    Box-Muller, u1 = 1 - uniform(), u2 = uniform(),
///              sqrt(-2 ln u1) * cos(2π u2); one normal per two draws.
///
/// Integer draws are bit-exact everywhere. normal() additionally depends on the
/// platform's log/cos.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();

 private:
  std::uint64_t state_;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace geoctx
