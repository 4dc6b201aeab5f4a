// SPDX-License-Identifier: Apache-2.0
#include "hecnn/ckks/params.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "hecnn/error.hpp"

namespace hecnn::ckks {

std::string_view to_string(SecurityProfile profile) noexcept {
  return profile == SecurityProfile::paper ? "paper" : "test-insecure";
}

double CkksParams::scale() const noexcept { return std::ldexp(1.0, scale_bits); }

double CkksParams::log_q() const noexcept {
  double bits = 0.0;
  for (u64 q : modulus_chain) bits += std::log2(static_cast<double>(q));
  return bits;
}

u64 CkksParams::hash() const noexcept {
  u64 h = 1469598103934665603ULL;
  auto mix = [&](u64 v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xff;
      h *= 1099511628211ULL;
    }
  };
  mix(ring_degree);
  mix(static_cast<u64>(scale_bits));
  mix(modulus_chain.size());
  for (u64 q : modulus_chain) mix(q);
  mix(special_prime);
  return h;
}

void CkksParams::validate() const {
  if (ring_degree < 8 || (ring_degree & (ring_degree - 1)) != 0) {
    throw Error(ErrorCode::invalid_argument, "ring degree must be a power of two >= 8");
  }
  if (modulus_chain.empty()) throw Error(ErrorCode::invalid_prime_chain, "empty modulus chain");
  if (scale_bits < 10 || scale_bits > 50) throw Error(ErrorCode::invalid_argument, "scale bits out of range");
  std::set<u64> seen;
  auto check = [&](u64 q) {
    if (!is_prime(q) || q >= (u64{1} << 61) || (q - 1) % (2 * ring_degree) != 0) {
      throw Error(ErrorCode::invalid_prime_chain, std::to_string(q) + " is not an NTT-friendly prime");
    }
    if (!seen.insert(q).second) throw Error(ErrorCode::invalid_prime_chain, "duplicate prime " + std::to_string(q));
  };
  for (u64 q : modulus_chain) check(q);
  check(special_prime);
  if (special_prime < *std::max_element(modulus_chain.begin(), modulus_chain.end())) {
    throw Error(ErrorCode::invalid_prime_chain, "special prime must dominate the chain");
  }
}

namespace {

// Largest NTT-friendly prime below 2^bits not already taken.
u64 prime_below(int bits, std::size_t two_n, const std::set<u64>& taken) {
  const u64 step = two_n;
  u64 c = ((u64{1} << bits) - 1) / step * step + 1;
  for (; c > step; c -= step) {
    if (c < (u64{1} << bits) && !taken.contains(c) && is_prime(c)) return c;
  }
  throw Error(ErrorCode::invalid_prime_chain, "ran out of primes");
}

u64 prime_above(int bits, std::size_t two_n, const std::set<u64>& taken) {
  for (u64 c = (u64{1} << bits) + 1;; c += two_n) {
    if (!taken.contains(c) && is_prime(c)) return c;
  }
}

}  // namespace

CkksParams make_params(std::string name, std::size_t ring_degree, int base_bits, int level, int scale_bits,
                       int special_bits, SecurityProfile profile) {
  if (level < 0) throw Error(ErrorCode::invalid_argument, "level must be non-negative");
  CkksParams p;
  p.name = std::move(name);
  p.ring_degree = ring_degree;
  p.scale_bits = scale_bits;
  p.security_profile = profile;
  std::set<u64> taken;
  const std::size_t two_n = 2 * ring_degree;
  const u64 base = prime_below(base_bits, two_n, taken);
  taken.insert(base);
  p.modulus_chain.push_back(base);
  for (int i = 0; i < level; ++i) {
    const u64 q = (i % 2 == 0) ? prime_above(scale_bits, two_n, taken) : prime_below(scale_bits, two_n, taken);
    taken.insert(q);
    p.modulus_chain.push_back(q);
  }
  p.special_prime = prime_below(special_bits, two_n, taken);
  p.validate();
  return p;
}

const std::vector<PresetInfo>& preset_table() {
  static const std::vector<PresetInfo> table = {
      {"mnist-baseline", 5, 200},
      {"mnist-deg4", 7, 260},
      {"cifar-baseline", 8, 290},
      {"cifar-deg4", 11, 380},
  };
  return table;
}

CkksParams preset(std::string_view name, SecurityProfile profile) {
  constexpr int kScaleBits = 30;
  constexpr int kSpecialBits = 60;
  for (const auto& info : preset_table()) {
    if (info.name != name) continue;
    const std::size_t n = profile == SecurityProfile::paper ? (1u << 14) : (1u << 13);
    const int base_bits = info.log_q - info.level * kScaleBits;
    return make_params(std::string(name), n, base_bits, info.level, kScaleBits, kSpecialBits, profile);
  }
  throw Error(ErrorCode::invalid_argument, "unknown preset '" + std::string(name) + "'");
}

}  // namespace hecnn::ckks
