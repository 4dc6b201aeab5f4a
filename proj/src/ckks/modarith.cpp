// SPDX-License-Identifier: Apache-2.0
#include "hecnn/ckks/modarith.hpp"

#include <bit>

#include "hecnn/error.hpp"

namespace hecnn::ckks {

Modulus::Modulus(u64 value) : value_(value) {
  if (value < 2 || value >= (u64{1} << 61)) {
    throw Error(ErrorCode::invalid_prime_chain, "modulus must lie in [2, 2^61)");
  }
  bits_ = std::bit_width(value);
  // floor(2^128 / q) = floor((2^128 - 1) / q) because q is not a power of two for q > 2.
  const u128 all_ones = ~u128{0};
  const u128 ratio = all_ones / value;
  ratio_hi_ = static_cast<u64>(ratio >> 64);
  ratio_lo_ = static_cast<u64>(ratio);
}

u64 Modulus::pow(u64 base, u64 exp) const noexcept {
  u64 result = 1 % value_;
  base = reduce(base);
  while (exp != 0) {
    if (exp & 1) result = mul(result, base);
    base = mul(base, base);
    exp >>= 1;
  }
  return result;
}

namespace {

u64 pow_mod(u64 b, u64 e, u64 m) {
  u128 r = 1;
  u128 x = b % m;
  while (e) {
    if (e & 1) r = r * x % m;
    x = x * x % m;
    e >>= 1;
  }
  return static_cast<u64>(r);
}

}  // namespace

bool is_prime(u64 n) noexcept {
  if (n < 2) return false;
  for (u64 p : {2ULL, 3ULL, 5ULL, 7ULL, 11ULL, 13ULL, 17ULL, 19ULL, 23ULL, 29ULL, 31ULL, 37ULL}) {
    if (n % p == 0) return n == p;
  }
  u64 d = n - 1;
  int s = 0;
  while ((d & 1) == 0) {
    d >>= 1;
    ++s;
  }
  for (u64 a : {2ULL, 3ULL, 5ULL, 7ULL, 11ULL, 13ULL, 17ULL, 19ULL, 23ULL, 29ULL, 31ULL, 37ULL}) {
    u64 x = pow_mod(a, d, n);
    if (x == 1 || x == n - 1) continue;
    bool composite = true;
    for (int r = 1; r < s; ++r) {
      x = static_cast<u64>(static_cast<u128>(x) * x % n);
      if (x == n - 1) {
        composite = false;
        break;
      }
    }
    if (composite) return false;
  }
  return true;
}

}  // namespace hecnn::ckks
