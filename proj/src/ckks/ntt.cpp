// SPDX-License-Identifier: Apache-2.0
#include "hecnn/ckks/ntt.hpp"

#include <bit>

#include "hecnn/error.hpp"

namespace hecnn::ckks {

namespace {

std::size_t reverse_bits(std::size_t x, int bits) {
  std::size_t r = 0;
  for (int i = 0; i < bits; ++i) {
    r = (r << 1) | (x & 1);
    x >>= 1;
  }
  return r;
}

}  // namespace

u64 find_primitive_root(const Modulus& modulus, std::size_t two_n) {
  const u64 q = modulus.value();
  if (!is_prime(q) || (q - 1) % two_n != 0) {
    throw Error(ErrorCode::invalid_prime_chain, "modulus " + std::to_string(q) + " is not an NTT-friendly prime");
  }
  const u64 cofactor = (q - 1) / two_n;
  // Deterministic search so that keys and transforms are reproducible.
  for (u64 g = 2; g < q; ++g) {
    const u64 root = modulus.pow(g, cofactor);
    if (modulus.pow(root, two_n / 2) == q - 1) return root;
  }
  throw Error(ErrorCode::invalid_prime_chain, "no primitive root found");
}

NttTables::NttTables(const Modulus& modulus, std::size_t n) : modulus_(modulus), n_(n) {
  if (n < 2 || !std::has_single_bit(n)) throw Error(ErrorCode::invalid_argument, "NTT size must be a power of two");
  const int log_n = std::countr_zero(n);
  const u64 psi = find_primitive_root(modulus_, 2 * n);
  const u64 psi_inv = modulus_.inv(psi);
  psi_rev_.resize(n);
  psi_inv_rev_.resize(n);
  u64 p = 1, pi = 1;
  std::vector<u64> powers(n), inv_powers(n);
  for (std::size_t i = 0; i < n; ++i) {
    powers[i] = p;
    inv_powers[i] = pi;
    p = modulus_.mul(p, psi);
    pi = modulus_.mul(pi, psi_inv);
  }
  psi_rev_shoup_.resize(n);
  psi_inv_rev_shoup_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = reverse_bits(i, log_n);
    psi_rev_[i] = powers[r];
    psi_inv_rev_[i] = inv_powers[r];
    psi_rev_shoup_[i] = modulus_.shoup(psi_rev_[i]);
    psi_inv_rev_shoup_[i] = modulus_.shoup(psi_inv_rev_[i]);
  }
  n_inv_ = modulus_.inv(n % modulus_.value());
  n_inv_shoup_ = modulus_.shoup(n_inv_);
}

void NttTables::forward(std::span<u64> a) const noexcept {
  const u64 q = modulus_.value();
  std::size_t t = n_;
  for (std::size_t m = 1; m < n_; m <<= 1) {
    t >>= 1;
    for (std::size_t i = 0; i < m; ++i) {
      const std::size_t j1 = 2 * i * t;
      const u64 w = psi_rev_[m + i];
      const u64 ws = psi_rev_shoup_[m + i];
      u64* x = a.data() + j1;
      u64* y = x + t;
      for (std::size_t j = 0; j < t; ++j) {
        const u64 u = x[j];
        const u64 v = modulus_.mul_shoup(y[j], w, ws);
        const u64 s = u + v;
        x[j] = s >= q ? s - q : s;
        y[j] = u >= v ? u - v : u + q - v;
      }
    }
  }
}

void NttTables::inverse(std::span<u64> a) const noexcept {
  const u64 q = modulus_.value();
  std::size_t t = 1;
  for (std::size_t m = n_; m > 1; m >>= 1) {
    const std::size_t h = m >> 1;
    std::size_t j1 = 0;
    for (std::size_t i = 0; i < h; ++i) {
      const u64 w = psi_inv_rev_[h + i];
      const u64 ws = psi_inv_rev_shoup_[h + i];
      u64* x = a.data() + j1;
      u64* y = x + t;
      for (std::size_t j = 0; j < t; ++j) {
        const u64 u = x[j];
        const u64 v = y[j];
        const u64 s = u + v;
        x[j] = s >= q ? s - q : s;
        y[j] = modulus_.mul_shoup(u >= v ? u - v : u + q - v, w, ws);
      }
      j1 += 2 * t;
    }
    t <<= 1;
  }
  for (auto& v : a) v = modulus_.mul_shoup(v, n_inv_, n_inv_shoup_);
}

}  // namespace hecnn::ckks
