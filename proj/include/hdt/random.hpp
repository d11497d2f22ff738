#pragma once

#include <array>
#include <cstdint>

namespace hdt {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
///
/// Stateless: the output is a pure function of a 128-bit counter and a
/// 64-bit key, so any draw can be regenerated from its index alone.
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter apply(Counter ctr, Key key) noexcept;
};

/// A stream of uniform doubles addressed by (key, stream, index).
///
/// Block `b` of stream `s` is Philox(ctr = {lo(b), hi(b), lo(s), hi(s)},
/// key = {lo(seed), hi(seed)}). Each block yields two 64-bit words
/// (w0 = out[0] | out[1] << 32, w1 = out[2] | out[3] << 32), each mapped to
/// ((w >> 12) + 0.5) * 2^-52, which lies strictly inside (0, 1).
class CounterStream {
 public:
  CounterStream(std::uint64_t seed, std::uint64_t stream) noexcept
      : seed_(seed), stream_(stream) {}

  /// The `i`-th uniform of the stream.
  double uniform(std::uint64_t i) const noexcept;

  /// The pair of uniforms held by block `b` (uniforms 2b and 2b+1).
  std::array<double, 2> block(std::uint64_t b) const noexcept;

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
};

/// Box-Muller on a pair of (0, 1) uniforms: (r cos 2πu2, r sin 2πu2) with
/// r = sqrt(-2 ln u1).
std::array<double, 2> box_muller(double u1, double u2) noexcept;

/// Maps a 64-bit word to a double in (0, 1).
double to_unit_open(std::uint64_t w) noexcept;

/// SplitMix64 finalizer; used to derive independent sub-seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) noexcept;

}  // namespace hdt
