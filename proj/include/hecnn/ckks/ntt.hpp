// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hecnn/ckks/modarith.hpp"

namespace hecnn::ckks {

/// Negacyclic NTT over Z_q[X]/(X^n + 1). Forward output is in bit-reversed order;
/// inverse consumes that order, so pointwise products need no permutation.
class NttTables {
 public:
  NttTables(const Modulus& modulus, std::size_t n);

  const Modulus& modulus() const noexcept { return modulus_; }
  std::size_t size() const noexcept { return n_; }

  void forward(std::span<u64> values) const noexcept;
  void inverse(std::span<u64> values) const noexcept;

 private:
  Modulus modulus_;
  std::size_t n_;
  std::vector<u64> psi_rev_, psi_rev_shoup_;
  std::vector<u64> psi_inv_rev_, psi_inv_rev_shoup_;
  u64 n_inv_ = 0, n_inv_shoup_ = 0;
};

/// A primitive 2n-th root of unity mod q; throws invalid_prime_chain if q != 1 (mod 2n).
u64 find_primitive_root(const Modulus& modulus, std::size_t two_n);

}  // namespace hecnn::ckks
