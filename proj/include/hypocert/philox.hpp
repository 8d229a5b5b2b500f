#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace hypocert {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
struct Philox4x32 {
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter generate(Counter ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += 0x9E3779B9u;
        key[1] += 0xBB67AE85u;
      }
      const std::uint64_t p0 = std::uint64_t{0xD2511F53u} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * ctr[2];
      ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
             static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
    }
    return ctr;
  }
};

/// Uniform in the open interval (0, 1) from 32 random bits.
inline double uniform_open(std::uint32_t bits) { return (static_cast<double>(bits) + 0.5) * 0x1p-32; }

/// Normal number `lane` (0..3) of the Box–Muller quadruple built from one
/// Philox block.
inline double box_muller_lane(const Philox4x32::Counter& block, int lane) {
  const int pair = lane / 2;
  const double r = std::sqrt(-2.0 * std::log(uniform_open(block[2 * pair])));
  const double angle = 2.0 * std::numbers::pi * uniform_open(block[2 * pair + 1]);
  return r * (lane % 2 == 0 ? std::cos(angle) : std::sin(angle));
}

}  // namespace hypocert
