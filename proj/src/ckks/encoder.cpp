// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <complex>

#include "hecnn/ckks/scheme.hpp"
#include "hecnn/error.hpp"

namespace hecnn::ckks {

namespace {

using cd = std::complex<double>;

void bit_reverse(std::span<cd> v) {
  const std::size_t n = v.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(v[i], v[j]);
  }
}

// Slot values -> coefficient-embedding values (inverse canonical embedding on the
// orbit of 5 in Z_{2N}^*).
void special_fft_inverse(const CkksContext& ctx, std::span<cd> vals) {
  const auto ksi = ctx.ksi_powers();
  const auto rot = ctx.rotation_group();
  const std::size_t m = 2 * ctx.degree();
  const std::size_t size = vals.size();
  for (std::size_t len = size; len >= 1; len >>= 1) {
    const std::size_t lenh = len >> 1;
    const std::size_t lenq = len << 2;
    const std::size_t gap = m / lenq;
    for (std::size_t i = 0; i < size; i += len) {
      for (std::size_t j = 0; j < lenh; ++j) {
        const std::size_t idx = (lenq - (rot[j] % lenq)) * gap;
        const cd u = vals[i + j] + vals[i + j + lenh];
        const cd v = (vals[i + j] - vals[i + j + lenh]) * ksi[idx];
        vals[i + j] = u;
        vals[i + j + lenh] = v;
      }
    }
  }
  bit_reverse(vals);
  const double inv = 1.0 / static_cast<double>(size);
  for (auto& v : vals) v *= inv;
}

void special_fft(const CkksContext& ctx, std::span<cd> vals) {
  const auto ksi = ctx.ksi_powers();
  const auto rot = ctx.rotation_group();
  const std::size_t m = 2 * ctx.degree();
  const std::size_t size = vals.size();
  bit_reverse(vals);
  for (std::size_t len = 2; len <= size; len <<= 1) {
    const std::size_t lenh = len >> 1;
    const std::size_t lenq = len << 2;
    const std::size_t gap = m / lenq;
    for (std::size_t i = 0; i < size; i += len) {
      for (std::size_t j = 0; j < lenh; ++j) {
        const std::size_t idx = (rot[j] % lenq) * gap;
        const cd u = vals[i + j];
        const cd v = vals[i + j + lenh] * ksi[idx];
        vals[i + j] = u + v;
        vals[i + j + lenh] = u - v;
      }
    }
  }
}

void check_level(const CkksContext& ctx, int level) {
  if (level < 0 || level > ctx.top_level()) {
    throw Error(ErrorCode::invalid_argument, "level " + std::to_string(level) + " outside the modulus chain");
  }
}

void check_fits(const CkksContext& ctx, double max_abs, int level) {
  // One bit of headroom for the sign and one for noise.
  if (max_abs >= 0x1p62 || (max_abs >= 1.0 && std::log2(max_abs) + 2.0 >= ctx.log_q_at(level))) {
    throw Error(ErrorCode::encode_overflow, "scaled value does not fit the modulus at level " + std::to_string(level));
  }
}

}  // namespace

Plaintext encode(const CkksContext& ctx, std::span<const double> values, double scale, int level) {
  check_level(ctx, level);
  const std::size_t n = ctx.degree();
  const std::size_t slots = n / 2;
  if (values.size() > slots) throw Error(ErrorCode::invalid_argument, "more values than slots");
  if (!(scale > 0.0)) throw Error(ErrorCode::invalid_argument, "scale must be positive");

  std::vector<cd> vals(slots, cd{0.0, 0.0});
  for (std::size_t i = 0; i < values.size(); ++i) vals[i] = values[i];
  special_fft_inverse(ctx, vals);

  std::vector<std::int64_t> coeffs(n);
  double max_abs = 0.0;
  for (std::size_t i = 0; i < slots; ++i) {
    const double re = std::round(vals[i].real() * scale);
    const double im = std::round(vals[i].imag() * scale);
    max_abs = std::max({max_abs, std::abs(re), std::abs(im)});
    if (!std::isfinite(re) || !std::isfinite(im)) throw Error(ErrorCode::encode_overflow, "non-finite value");
  }
  check_fits(ctx, max_abs, level);
  for (std::size_t i = 0; i < slots; ++i) {
    coeffs[i] = static_cast<std::int64_t>(std::round(vals[i].real() * scale));
    coeffs[i + slots] = static_cast<std::int64_t>(std::round(vals[i].imag() * scale));
  }

  Plaintext pt{RnsPoly(n, static_cast<std::size_t>(level) + 1, false), scale, level};
  ctx.set_signed(pt.poly, coeffs);
  ctx.to_ntt(pt.poly);
  return pt;
}

Plaintext encode_constant(const CkksContext& ctx, double value, double scale, int level) {
  check_level(ctx, level);
  const double scaled = std::round(value * scale);
  if (!std::isfinite(scaled)) throw Error(ErrorCode::encode_overflow, "non-finite value");
  check_fits(ctx, std::abs(scaled), level);
  const auto c = static_cast<std::int64_t>(scaled);
  Plaintext pt{RnsPoly(ctx.degree(), static_cast<std::size_t>(level) + 1, false), scale, level};
  // The NTT of a constant polynomial is that constant at every evaluation point.
  for (std::size_t i = 0; i < pt.poly.residues(); ++i) {
    const u64 r = ctx.modulus_of(pt.poly, i).from_signed(c);
    std::fill(pt.poly.residue(i).begin(), pt.poly.residue(i).end(), r);
  }
  return pt;
}

std::vector<double> decode(const CkksContext& ctx, const Plaintext& pt) {
  const std::size_t n = ctx.degree();
  const std::size_t slots = n / 2;
  // Values are recovered from the first two primes (q0 * q1 > 2^79), enough for any
  // |value| * scale this library produces.
  const std::size_t used = std::min<std::size_t>(2, pt.poly.chain_count);
  RnsPoly low = ctx.restrict(pt.poly, used, false);
  ctx.from_ntt(low);

  std::vector<double> coeffs(n);
  const Modulus& q0 = ctx.chain_modulus(0);
  if (used == 1) {
    const u64 q = q0.value();
    for (std::size_t k = 0; k < n; ++k) {
      const u64 a = low.residue(0)[k];
      coeffs[k] = a > q / 2 ? -static_cast<double>(q - a) : static_cast<double>(a);
    }
  } else {
    const Modulus& q1 = ctx.chain_modulus(1);
    const u64 q0_inv = q1.inv(q1.reduce(q0.value()));
    const u128 big = static_cast<u128>(q0.value()) * q1.value();
    for (std::size_t k = 0; k < n; ++k) {
      const u64 a0 = low.residue(0)[k];
      const u64 a1 = low.residue(1)[k];
      const u64 t = q1.mul(q1.sub(a1, q1.reduce(a0)), q0_inv);
      const u128 x = a0 + static_cast<u128>(q0.value()) * t;
      coeffs[k] = x > big / 2 ? -static_cast<double>(static_cast<long double>(big - x))
                              : static_cast<double>(static_cast<long double>(x));
    }
  }

  std::vector<cd> vals(slots);
  for (std::size_t i = 0; i < slots; ++i) vals[i] = cd{coeffs[i], coeffs[i + slots]} / pt.scale;
  special_fft(ctx, vals);
  std::vector<double> out(slots);
  for (std::size_t i = 0; i < slots; ++i) out[i] = vals[i].real();
  return out;
}

}  // namespace hecnn::ckks
