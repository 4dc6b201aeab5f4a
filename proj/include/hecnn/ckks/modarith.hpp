// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

namespace hecnn::ckks {

using u64 = std::uint64_t;
using u128 = unsigned __int128;

/// Word-sized prime modulus (< 2^61) with a precomputed Barrett ratio floor(2^128 / q).
class Modulus {
 public:
  Modulus() = default;
  explicit Modulus(u64 value);

  u64 value() const noexcept { return value_; }
  int bit_count() const noexcept { return bits_; }

  u64 add(u64 a, u64 b) const noexcept {
    const u64 s = a + b;
    return s >= value_ ? s - value_ : s;
  }
  u64 sub(u64 a, u64 b) const noexcept { return a >= b ? a - b : a + value_ - b; }
  u64 neg(u64 a) const noexcept { return a == 0 ? 0 : value_ - a; }

  /// Reduces any 128-bit value below q^2 (and in practice anything < 2^124).
  u64 reduce(u128 x) const noexcept {
    const u64 x0 = static_cast<u64>(x);
    const u64 x1 = static_cast<u64>(x >> 64);
    const u128 lo = static_cast<u128>(x0) * ratio_lo_;
    const u128 m1 = static_cast<u128>(x0) * ratio_hi_;
    const u128 m2 = static_cast<u128>(x1) * ratio_lo_;
    const u128 mid = (lo >> 64) + static_cast<u64>(m1) + static_cast<u64>(m2);
    const u64 qhat = static_cast<u64>(x1 * ratio_hi_ + (m1 >> 64) + (m2 >> 64) + (mid >> 64));
    u64 r = x0 - qhat * value_;
    while (r >= value_) r -= value_;
    return r;
  }
  u64 reduce(u64 x) const noexcept { return x >= value_ ? reduce(static_cast<u128>(x)) : x; }

  /// Maps a signed integer to its residue.
  u64 from_signed(std::int64_t x) const noexcept {
    if (x >= 0) return reduce(static_cast<u64>(x));
    return neg(reduce(static_cast<u64>(-(x + 1)) + 1));
  }

  u64 mul(u64 a, u64 b) const noexcept { return reduce(static_cast<u128>(a) * b); }
  u64 pow(u64 base, u64 exp) const noexcept;
  /// Inverse via Fermat; q is prime.
  u64 inv(u64 a) const noexcept { return pow(a, value_ - 2); }

  /// floor(w * 2^64 / q), the companion of a fixed multiplicand for mul_shoup.
  u64 shoup(u64 w) const noexcept { return static_cast<u64>((static_cast<u128>(w) << 64) / value_); }

  u64 mul_shoup(u64 a, u64 w, u64 w_shoup) const noexcept {
    const u64 hi = static_cast<u64>((static_cast<u128>(a) * w_shoup) >> 64);
    const u64 r = a * w - hi * value_;
    return r >= value_ ? r - value_ : r;
  }

  friend bool operator==(const Modulus& a, const Modulus& b) noexcept { return a.value_ == b.value_; }

 private:
  u64 value_ = 0;
  u64 ratio_hi_ = 0;
  u64 ratio_lo_ = 0;
  int bits_ = 0;
};

/// Deterministic Miller-Rabin for 64-bit inputs.
bool is_prime(u64 n) noexcept;

}  // namespace hecnn::ckks
