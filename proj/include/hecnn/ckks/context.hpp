// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "hecnn/ckks/modarith.hpp"
#include "hecnn/ckks/ntt.hpp"
#include "hecnn/ckks/params.hpp"

namespace hecnn::ckks {

/// Polynomial in RNS form: one residue row per chain prime 0..chain_count-1, optionally
/// followed by a row for the special prime. Rows are laid out contiguously.
struct RnsPoly {
  std::size_t n = 0;
  std::size_t chain_count = 0;
  bool with_special = false;
  std::vector<u64> data;

  RnsPoly() = default;
  RnsPoly(std::size_t degree, std::size_t chain, bool special)
      : n(degree), chain_count(chain), with_special(special), data(degree * (chain + (special ? 1 : 0)), 0) {}

  std::size_t residues() const noexcept { return chain_count + (with_special ? 1 : 0); }
  std::span<u64> residue(std::size_t i) noexcept { return {data.data() + i * n, n}; }
  std::span<const u64> residue(std::size_t i) const noexcept { return {data.data() + i * n, n}; }

  friend bool operator==(const RnsPoly&, const RnsPoly&) = default;
};

/// Immutable precomputation shared by every scheme operation: moduli, NTT tables,
/// rescale constants and the canonical-embedding FFT tables.
class CkksContext {
 public:
  explicit CkksContext(CkksParams params);

  static std::shared_ptr<const CkksContext> create(CkksParams params) {
    return std::make_shared<const CkksContext>(std::move(params));
  }

  const CkksParams& params() const noexcept { return params_; }
  std::size_t degree() const noexcept { return params_.ring_degree; }
  int top_level() const noexcept { return params_.level(); }
  std::size_t special_index() const noexcept { return moduli_.size() - 1; }

  /// Modulus of residue row i of p.
  const Modulus& modulus_of(const RnsPoly& p, std::size_t i) const noexcept {
    return moduli_[i < p.chain_count ? i : special_index()];
  }
  const NttTables& ntt_of(const RnsPoly& p, std::size_t i) const noexcept {
    return ntt_[i < p.chain_count ? i : special_index()];
  }
  const Modulus& chain_modulus(std::size_t i) const noexcept { return moduli_[i]; }
  const Modulus& special_modulus() const noexcept { return moduli_.back(); }

  void to_ntt(RnsPoly& p) const noexcept;
  void from_ntt(RnsPoly& p) const noexcept;

  /// Sets the polynomial from signed integer coefficients (coefficient form).
  void set_signed(RnsPoly& p, std::span<const std::int64_t> coeffs) const noexcept;

  /// Divides by the modulus of the last residue row with rounding and drops that row.
  /// Input and output are in NTT form.
  void divide_round_last(RnsPoly& p) const;

  /// Copy with the first `chain` rows and optionally the special row of p.
  RnsPoly restrict(const RnsPoly& p, std::size_t chain, bool special) const;

  /// log2 of the product of chain primes 0..level.
  double log_q_at(int level) const noexcept { return log_q_prefix_[static_cast<std::size_t>(level)]; }

  // Canonical embedding tables.
  std::span<const std::complex<double>> ksi_powers() const noexcept { return ksi_pows_; }
  std::span<const std::size_t> rotation_group() const noexcept { return rot_group_; }

 private:
  CkksParams params_;
  std::vector<Modulus> moduli_;
  std::vector<NttTables> ntt_;
  // inv_last_[k][j] = (modulus k)^-1 mod chain prime j, for j < k (k indexes moduli_).
  std::vector<std::vector<u64>> inv_last_;
  std::vector<double> log_q_prefix_;
  std::vector<std::complex<double>> ksi_pows_;
  std::vector<std::size_t> rot_group_;
};

}  // namespace hecnn::ckks
