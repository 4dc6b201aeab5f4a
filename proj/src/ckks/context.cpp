// SPDX-License-Identifier: Apache-2.0
#include "hecnn/ckks/context.hpp"

#include <cmath>
#include <numbers>

#include "hecnn/error.hpp"

namespace hecnn::ckks {

CkksContext::CkksContext(CkksParams params) : params_(std::move(params)) {
  params_.validate();
  const std::size_t n = params_.ring_degree;
  for (u64 q : params_.modulus_chain) moduli_.emplace_back(q);
  moduli_.emplace_back(params_.special_prime);
  ntt_.reserve(moduli_.size());
  for (const auto& m : moduli_) ntt_.emplace_back(m, n);

  inv_last_.resize(moduli_.size());
  for (std::size_t k = 0; k < moduli_.size(); ++k) {
    const std::size_t rows = k == special_index() ? params_.modulus_chain.size() : k;
    for (std::size_t j = 0; j < rows; ++j) {
      inv_last_[k].push_back(moduli_[j].inv(moduli_[j].reduce(moduli_[k].value())));
    }
  }

  double acc = 0.0;
  for (u64 q : params_.modulus_chain) {
    acc += std::log2(static_cast<double>(q));
    log_q_prefix_.push_back(acc);
  }

  const std::size_t m = 2 * n;
  ksi_pows_.resize(m + 1);
  for (std::size_t j = 0; j <= m; ++j) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(m);
    ksi_pows_[j] = {std::cos(angle), std::sin(angle)};
  }
  rot_group_.resize(n / 2);
  std::size_t five_pow = 1;
  for (auto& r : rot_group_) {
    r = five_pow;
    five_pow = five_pow * 5 % m;
  }
}

void CkksContext::to_ntt(RnsPoly& p) const noexcept {
  for (std::size_t i = 0; i < p.residues(); ++i) ntt_of(p, i).forward(p.residue(i));
}

void CkksContext::from_ntt(RnsPoly& p) const noexcept {
  for (std::size_t i = 0; i < p.residues(); ++i) ntt_of(p, i).inverse(p.residue(i));
}

void CkksContext::set_signed(RnsPoly& p, std::span<const std::int64_t> coeffs) const noexcept {
  for (std::size_t i = 0; i < p.residues(); ++i) {
    const Modulus& q = modulus_of(p, i);
    auto row = p.residue(i);
    for (std::size_t k = 0; k < p.n; ++k) row[k] = q.from_signed(coeffs[k]);
  }
}

void CkksContext::divide_round_last(RnsPoly& p) const {
  if (p.residues() < 2) throw Error(ErrorCode::level_exhausted, "cannot drop the last remaining prime");
  const std::size_t last = p.residues() - 1;
  const std::size_t last_modulus = p.with_special ? special_index() : last;
  const Modulus& ql = moduli_[last_modulus];
  const u64 half = ql.value() >> 1;

  std::vector<u64> top(p.residue(last).begin(), p.residue(last).end());
  ntt_[last_modulus].inverse(top);
  for (auto& v : top) v = ql.add(v, half);

  std::vector<u64> tmp(p.n);
  for (std::size_t j = 0; j < last; ++j) {
    const Modulus& qj = moduli_[j];
    const u64 half_j = qj.reduce(half);
    for (std::size_t k = 0; k < p.n; ++k) tmp[k] = qj.sub(qj.reduce(top[k]), half_j);
    ntt_[j].forward(tmp);
    const u64 inv = inv_last_[last_modulus][j];
    const u64 inv_shoup = qj.shoup(inv);
    auto row = p.residue(j);
    for (std::size_t k = 0; k < p.n; ++k) row[k] = qj.mul_shoup(qj.sub(row[k], tmp[k]), inv, inv_shoup);
  }
  p.data.resize(last * p.n);
  if (p.with_special) {
    p.with_special = false;
  } else {
    --p.chain_count;
  }
}

RnsPoly CkksContext::restrict(const RnsPoly& p, std::size_t chain, bool special) const {
  if (chain > p.chain_count || (special && !p.with_special)) {
    throw Error(ErrorCode::invalid_argument, "cannot restrict polynomial to more primes than it has");
  }
  RnsPoly out(p.n, chain, special);
  std::copy(p.data.begin(), p.data.begin() + static_cast<std::ptrdiff_t>(chain * p.n), out.data.begin());
  if (special) {
    auto src = p.residue(p.residues() - 1);
    std::copy(src.begin(), src.end(), out.residue(chain).begin());
  }
  return out;
}

}  // namespace hecnn::ckks
