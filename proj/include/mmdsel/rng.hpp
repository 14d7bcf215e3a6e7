#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace mmdsel {

// Counter-based random stream built on Philox4x32-10.
//
// The generator is fully specified so that committed golden values stay
// stable: the 64-bit seed forms the Philox key, the 64-bit stream id
// occupies the upper counter words, and the lower counter words count
// blocks within the stream. Distinct (seed, stream) pairs therefore
// yield independent streams without coordination, which is what the
// simulation harness relies on when it hands every (trial, role) pair
// its own stream.
class PhiloxStream {
 public:
  explicit PhiloxStream(std::uint64_t seed, std::uint64_t stream = 0)
      : key_{static_cast<std::uint32_t>(seed),
             static_cast<std::uint32_t>(seed >> 32)},
        stream_(stream) {}

  std::uint32_t next_u32() {
    if (pos_ == 4) refill();
    return buf_[pos_++];
  }

  std::uint64_t next_u64() {
    const std::uint64_t lo = next_u32();
    const std::uint64_t hi = next_u32();
    return lo | (hi << 32);
  }

  // Uniform on [0, 1) with 53 random bits.
  double next_unit() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, bound); unbiased via rejection from the top.
  std::uint64_t next_below(std::uint64_t bound) {
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return r % bound;
    }
  }

  // Standard normal via Box-Muller; consumes two uniforms per pair of draws.
  double next_gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    // u1 in (0, 1] so the logarithm stays finite.
    const double u1 =
        static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    const double u2 = next_unit();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    have_spare_ = true;
    return radius * std::cos(angle);
  }

  // Ten Philox4x32 rounds over one counter block; reference constants from
  // the Philox4x32 definition. Exposed so known-answer tests can pin the
  // generator down exactly.
  static std::array<std::uint32_t, 4> philox_block(
      std::array<std::uint32_t, 4> x, std::array<std::uint32_t, 2> k) {
    constexpr std::uint32_t kMul0 = 0xD2511F53u;
    constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    constexpr std::uint32_t kBump0 = 0x9E3779B9u;
    constexpr std::uint32_t kBump1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
      const std::uint32_t hi0 = mul_hi(kMul0, x[0]);
      const std::uint32_t lo0 = kMul0 * x[0];
      const std::uint32_t hi1 = mul_hi(kMul1, x[2]);
      const std::uint32_t lo1 = kMul1 * x[2];
      x = {hi1 ^ x[1] ^ k[0], lo1, hi0 ^ x[3] ^ k[1], lo0};
      k[0] += kBump0;
      k[1] += kBump1;
    }
    return x;
  }

 private:
  static std::uint32_t mul_hi(std::uint32_t a, std::uint32_t b) {
    return static_cast<std::uint32_t>(
        (static_cast<std::uint64_t>(a) * b) >> 32);
  }

  void refill() {
    buf_ = philox_block({static_cast<std::uint32_t>(block_),
                         static_cast<std::uint32_t>(block_ >> 32),
                         static_cast<std::uint32_t>(stream_),
                         static_cast<std::uint32_t>(stream_ >> 32)},
                        key_);
    pos_ = 0;
    ++block_;
  }

  std::array<std::uint32_t, 2> key_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buf_{};
  int pos_ = 4;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// Stream-id layout shared by the simulation harness and the CLI: the trial
// index occupies the high half, the role the low half. Model s uses role
// kModelBase + s.
namespace stream_role {
inline constexpr std::uint32_t kReal = 0;
inline constexpr std::uint32_t kBandwidth = 1;
inline constexpr std::uint32_t kDesign = 2;
inline constexpr std::uint32_t kModelBase = 3;
}  // namespace stream_role

inline constexpr std::uint64_t stream_id(std::uint32_t trial,
                                         std::uint32_t role) {
  return (static_cast<std::uint64_t>(trial) << 32) | role;
}

}  // namespace mmdsel
