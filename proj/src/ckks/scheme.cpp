// SPDX-License-Identifier: Apache-2.0
#include "hecnn/ckks/scheme.hpp"

#include <cmath>

#include "hecnn/error.hpp"

namespace hecnn::ckks {

std::int64_t Prng::gaussian() {
  std::normal_distribution<double> dist(0.0, kNoiseStddev);
  for (;;) {
    const double v = dist(engine_);
    if (std::abs(v) <= 6.0 * kNoiseStddev) return static_cast<std::int64_t>(std::llround(v));
  }
}

namespace {

RnsPoly sample_small(const CkksContext& ctx, Prng& prng, std::size_t chain, bool special, bool ternary) {
  RnsPoly p(ctx.degree(), chain, special);
  std::vector<std::int64_t> coeffs(ctx.degree());
  for (auto& c : coeffs) c = ternary ? prng.ternary() : prng.gaussian();
  ctx.set_signed(p, coeffs);
  ctx.to_ntt(p);
  return p;
}

// Uniform residues are uniform in the NTT domain as well.
RnsPoly sample_uniform(const CkksContext& ctx, Prng& prng, std::size_t chain, bool special) {
  RnsPoly p(ctx.degree(), chain, special);
  for (std::size_t i = 0; i < p.residues(); ++i) {
    const u64 q = ctx.modulus_of(p, i).value();
    for (auto& v : p.residue(i)) v = prng.uniform(q);
  }
  return p;
}

// out = a * b (pointwise, NTT form)
RnsPoly mul_poly(const CkksContext& ctx, const RnsPoly& a, const RnsPoly& b) {
  RnsPoly out(a.n, a.chain_count, a.with_special);
  for (std::size_t i = 0; i < a.residues(); ++i) {
    const Modulus& q = ctx.modulus_of(a, i);
    auto x = a.residue(i);
    auto y = b.residue(i);
    auto o = out.residue(i);
    for (std::size_t k = 0; k < a.n; ++k) o[k] = q.mul(x[k], y[k]);
  }
  return out;
}

void add_into(const CkksContext& ctx, RnsPoly& acc, const RnsPoly& b) {
  for (std::size_t i = 0; i < acc.residues(); ++i) {
    const Modulus& q = ctx.modulus_of(acc, i);
    auto o = acc.residue(i);
    auto y = b.residue(i);
    for (std::size_t k = 0; k < acc.n; ++k) o[k] = q.add(o[k], y[k]);
  }
}

void sub_into(const CkksContext& ctx, RnsPoly& acc, const RnsPoly& b) {
  for (std::size_t i = 0; i < acc.residues(); ++i) {
    const Modulus& q = ctx.modulus_of(acc, i);
    auto o = acc.residue(i);
    auto y = b.residue(i);
    for (std::size_t k = 0; k < acc.n; ++k) o[k] = q.sub(o[k], y[k]);
  }
}

void mul_acc(const CkksContext& ctx, RnsPoly& acc, const RnsPoly& a, const RnsPoly& b) {
  for (std::size_t i = 0; i < acc.residues(); ++i) {
    const Modulus& q = ctx.modulus_of(acc, i);
    auto o = acc.residue(i);
    auto x = a.residue(i);
    auto y = b.residue(i);
    for (std::size_t k = 0; k < acc.n; ++k) o[k] = q.add(o[k], q.mul(x[k], y[k]));
  }
}

void negate_inplace(const CkksContext& ctx, RnsPoly& p) {
  for (std::size_t i = 0; i < p.residues(); ++i) {
    const Modulus& q = ctx.modulus_of(p, i);
    for (auto& v : p.residue(i)) v = q.neg(v);
  }
}

std::size_t rows(int level) { return static_cast<std::size_t>(level) + 1; }

void check_hash(const CkksContext& ctx, u64 hash) {
  if (hash != ctx.params().hash()) throw Error(ErrorCode::params_mismatch, "object was created under other parameters");
}

bool scales_match(double a, double b) { return std::abs(a - b) <= kScaleTolerance * std::max(a, b); }

void check_compatible(const CkksContext& ctx, const Ciphertext& a, const Ciphertext& b) {
  check_hash(ctx, a.params_hash);
  check_hash(ctx, b.params_hash);
  if (a.level != b.level) {
    throw Error(ErrorCode::level_mismatch,
                "levels " + std::to_string(a.level) + " and " + std::to_string(b.level) + " differ");
  }
  if (!scales_match(a.scale, b.scale)) throw Error(ErrorCode::scale_mismatch, "operand scales differ");
}

void check_scale_fits(const CkksContext& ctx, double scale, int level) {
  if (std::log2(scale) + 2.0 >= ctx.log_q_at(level)) {
    throw Error(ErrorCode::encode_overflow, "scale 2^" + std::to_string(std::log2(scale)) +
                                                " overflows the modulus at level " + std::to_string(level));
  }
}

std::int64_t scaled_integer(double value, double scale) {
  const double v = std::round(value * scale);
  if (!std::isfinite(v) || std::abs(v) >= 0x1p62) throw Error(ErrorCode::encode_overflow, "constant too large");
  return static_cast<std::int64_t>(v);
}

// Switches c (NTT form, chain primes 0..l) from key s^2 to s using per-prime digits and
// the special prime. Returns the two components to add into (c0, c1).
std::pair<RnsPoly, RnsPoly> key_switch(const CkksContext& ctx, const RnsPoly& c, const RelinKey& rlk) {
  const std::size_t n = ctx.degree();
  const std::size_t l1 = c.chain_count;
  RnsPoly acc0(n, l1, true), acc1(n, l1, true);
  std::vector<u64> digit(n), lifted(n);
  const std::size_t special_row = rlk.b.front().residues() - 1;

  for (std::size_t i = 0; i < l1; ++i) {
    std::copy(c.residue(i).begin(), c.residue(i).end(), digit.begin());
    ctx.ntt_of(c, i).inverse(digit);
    for (std::size_t t = 0; t <= l1; ++t) {
      const bool special = t == l1;
      const Modulus& q = special ? ctx.special_modulus() : ctx.chain_modulus(t);
      const std::size_t key_row = special ? special_row : t;
      std::span<const u64> d;
      if (t == i) {
        d = c.residue(i);
      } else {
        for (std::size_t k = 0; k < n; ++k) lifted[k] = q.reduce(digit[k]);
        (special ? ctx.ntt_of(acc0, l1) : ctx.ntt_of(acc0, t)).forward(lifted);
        d = lifted;
      }
      auto kb = rlk.b[i].residue(key_row);
      auto ka = rlk.a[i].residue(key_row);
      auto o0 = acc0.residue(t);
      auto o1 = acc1.residue(t);
      for (std::size_t k = 0; k < n; ++k) {
        o0[k] = q.add(o0[k], q.mul(d[k], kb[k]));
        o1[k] = q.add(o1[k], q.mul(d[k], ka[k]));
      }
    }
  }
  ctx.divide_round_last(acc0);
  ctx.divide_round_last(acc1);
  return {std::move(acc0), std::move(acc1)};
}

}  // namespace

KeySet keygen(const CkksContext& ctx, std::uint64_t seed) {
  Prng prng(seed);
  const std::size_t chain = ctx.params().modulus_chain.size();
  const u64 hash = ctx.params().hash();
  KeySet keys;
  keys.secret.s = sample_small(ctx, prng, chain, true, true);
  keys.secret.params_hash = hash;

  const RnsPoly& s = keys.secret.s;
  keys.pub.a = sample_uniform(ctx, prng, chain, true);
  keys.pub.b = sample_small(ctx, prng, chain, true, false);
  RnsPoly as = mul_poly(ctx, keys.pub.a, s);
  sub_into(ctx, keys.pub.b, as);
  keys.pub.params_hash = hash;

  const RnsPoly s2 = mul_poly(ctx, s, s);
  const u64 p = ctx.special_modulus().value();
  for (std::size_t i = 0; i < chain; ++i) {
    RnsPoly a = sample_uniform(ctx, prng, chain, true);
    RnsPoly b = sample_small(ctx, prng, chain, true, false);
    sub_into(ctx, b, mul_poly(ctx, a, s));
    const Modulus& qi = ctx.chain_modulus(i);
    const u64 p_mod = qi.reduce(p);
    auto row = b.residue(i);
    auto s2row = s2.residue(i);
    for (std::size_t k = 0; k < ctx.degree(); ++k) row[k] = qi.add(row[k], qi.mul(p_mod, s2row[k]));
    keys.relin.a.push_back(std::move(a));
    keys.relin.b.push_back(std::move(b));
  }
  keys.relin.params_hash = hash;
  return keys;
}

Ciphertext encrypt(const CkksContext& ctx, const PublicKey& pk, const Plaintext& pt, Prng& prng) {
  check_hash(ctx, pk.params_hash);
  if (pt.poly.chain_count != rows(pt.level) || pt.level > ctx.top_level()) {
    throw Error(ErrorCode::params_mismatch, "plaintext does not belong to this context");
  }
  const std::size_t chain = rows(pt.level);
  const RnsPoly u = sample_small(ctx, prng, chain, true, true);
  RnsPoly c0 = mul_poly(ctx, ctx.restrict(pk.b, chain, true), u);
  RnsPoly c1 = mul_poly(ctx, ctx.restrict(pk.a, chain, true), u);
  add_into(ctx, c0, sample_small(ctx, prng, chain, true, false));
  add_into(ctx, c1, sample_small(ctx, prng, chain, true, false));
  const u64 p = ctx.special_modulus().value();
  for (std::size_t j = 0; j < chain; ++j) {
    const Modulus& qj = ctx.chain_modulus(j);
    const u64 p_mod = qj.reduce(p);
    auto row = c0.residue(j);
    auto m = pt.poly.residue(j);
    for (std::size_t k = 0; k < ctx.degree(); ++k) row[k] = qj.add(row[k], qj.mul(p_mod, m[k]));
  }
  ctx.divide_round_last(c0);
  ctx.divide_round_last(c1);
  Ciphertext ct;
  ct.parts.push_back(std::move(c0));
  ct.parts.push_back(std::move(c1));
  ct.scale = pt.scale;
  ct.level = pt.level;
  ct.params_hash = ctx.params().hash();
  return ct;
}

Plaintext decrypt(const CkksContext& ctx, const SecretKey& sk, const Ciphertext& ct) {
  check_hash(ctx, sk.params_hash);
  check_hash(ctx, ct.params_hash);
  const std::size_t chain = rows(ct.level);
  const RnsPoly s = ctx.restrict(sk.s, chain, false);
  RnsPoly m = ct.parts[0];
  RnsPoly s_pow = s;
  for (std::size_t i = 1; i < ct.parts.size(); ++i) {
    mul_acc(ctx, m, ct.parts[i], s_pow);
    if (i + 1 < ct.parts.size()) s_pow = mul_poly(ctx, s_pow, s);
  }
  return Plaintext{std::move(m), ct.scale, ct.level};
}

Ciphertext add(const CkksContext& ctx, const Ciphertext& a, const Ciphertext& b) {
  check_compatible(ctx, a, b);
  const Ciphertext& big = a.size() >= b.size() ? a : b;
  const Ciphertext& small = a.size() >= b.size() ? b : a;
  Ciphertext out = big;
  for (std::size_t i = 0; i < small.size(); ++i) add_into(ctx, out.parts[i], small.parts[i]);
  return out;
}

Ciphertext negate(const CkksContext& ctx, const Ciphertext& a) {
  check_hash(ctx, a.params_hash);
  Ciphertext out = a;
  for (auto& p : out.parts) negate_inplace(ctx, p);
  return out;
}

Ciphertext sub(const CkksContext& ctx, const Ciphertext& a, const Ciphertext& b) {
  return add(ctx, a, negate(ctx, b));
}

Ciphertext add_plain(const CkksContext& ctx, const Ciphertext& a, const Plaintext& p) {
  check_hash(ctx, a.params_hash);
  if (a.level != p.level) throw Error(ErrorCode::level_mismatch, "plaintext level differs from ciphertext level");
  if (!scales_match(a.scale, p.scale)) throw Error(ErrorCode::scale_mismatch, "plaintext scale differs");
  Ciphertext out = a;
  add_into(ctx, out.parts[0], p.poly);
  return out;
}

Ciphertext add_const(const CkksContext& ctx, const Ciphertext& a, double value) {
  check_hash(ctx, a.params_hash);
  check_scale_fits(ctx, a.scale, a.level);
  const std::int64_t c = scaled_integer(value, a.scale);
  Ciphertext out = a;
  RnsPoly& c0 = out.parts[0];
  for (std::size_t i = 0; i < c0.residues(); ++i) {
    const Modulus& q = ctx.modulus_of(c0, i);
    const u64 r = q.from_signed(c);
    for (auto& v : c0.residue(i)) v = q.add(v, r);
  }
  return out;
}

Ciphertext multiply_raw(const CkksContext& ctx, const Ciphertext& a, const Ciphertext& b) {
  check_compatible(ctx, a, b);
  if (a.size() != 2 || b.size() != 2) throw Error(ErrorCode::invalid_argument, "operands must be relinearized");
  check_scale_fits(ctx, a.scale * b.scale, a.level);
  Ciphertext out;
  out.parts.push_back(mul_poly(ctx, a.parts[0], b.parts[0]));
  RnsPoly mid = mul_poly(ctx, a.parts[0], b.parts[1]);
  mul_acc(ctx, mid, a.parts[1], b.parts[0]);
  out.parts.push_back(std::move(mid));
  out.parts.push_back(mul_poly(ctx, a.parts[1], b.parts[1]));
  out.scale = a.scale * b.scale;
  out.level = a.level;
  out.params_hash = a.params_hash;
  return out;
}

Ciphertext relinearize(const CkksContext& ctx, const Ciphertext& a, const RelinKey& rlk) {
  check_hash(ctx, a.params_hash);
  check_hash(ctx, rlk.params_hash);
  if (a.size() == 2) return a;
  if (a.size() != 3) throw Error(ErrorCode::invalid_argument, "relinearization expects three parts");
  auto [k0, k1] = key_switch(ctx, a.parts[2], rlk);
  Ciphertext out;
  out.parts = {a.parts[0], a.parts[1]};
  add_into(ctx, out.parts[0], k0);
  add_into(ctx, out.parts[1], k1);
  out.scale = a.scale;
  out.level = a.level;
  out.params_hash = a.params_hash;
  return out;
}

Ciphertext rescale(const CkksContext& ctx, const Ciphertext& a) {
  check_hash(ctx, a.params_hash);
  if (a.level < 1) throw Error(ErrorCode::level_exhausted, "no prime left to rescale by");
  Ciphertext out = a;
  for (auto& p : out.parts) ctx.divide_round_last(p);
  out.scale = a.scale / static_cast<double>(ctx.chain_modulus(static_cast<std::size_t>(a.level)).value());
  out.level = a.level - 1;
  return out;
}

Ciphertext multiply(const CkksContext& ctx, const Ciphertext& a, const Ciphertext& b, const RelinKey& rlk) {
  if (a.level < 1 || b.level < 1) throw Error(ErrorCode::level_exhausted, "multiplication needs level >= 1");
  return rescale(ctx, relinearize(ctx, multiply_raw(ctx, a, b), rlk));
}

Ciphertext multiply_plain(const CkksContext& ctx, const Ciphertext& a, const Plaintext& p) {
  check_hash(ctx, a.params_hash);
  if (a.level < 1) throw Error(ErrorCode::level_exhausted, "multiplication needs level >= 1");
  if (a.level != p.level) throw Error(ErrorCode::level_mismatch, "plaintext level differs from ciphertext level");
  check_scale_fits(ctx, a.scale * p.scale, a.level);
  Ciphertext out = a;
  for (auto& part : out.parts) part = mul_poly(ctx, part, p.poly);
  out.scale = a.scale * p.scale;
  return rescale(ctx, out);
}

Ciphertext multiply_const_raw(const CkksContext& ctx, const Ciphertext& a, double value, double plain_scale) {
  const Ciphertext* in[] = {&a};
  const double w[] = {value};
  return linear_combination_raw(ctx, in, w, plain_scale);
}

Ciphertext linear_combination_raw(const CkksContext& ctx, std::span<const Ciphertext* const> inputs,
                                  std::span<const double> weights, double plain_scale) {
  if (inputs.empty() || inputs.size() != weights.size()) {
    throw Error(ErrorCode::invalid_argument, "need one weight per input");
  }
  const Ciphertext& first = *inputs.front();
  for (const Ciphertext* c : inputs) {
    check_compatible(ctx, first, *c);
    if (c->size() != 2) throw Error(ErrorCode::invalid_argument, "inputs must be relinearized");
  }
  check_scale_fits(ctx, first.scale * plain_scale, first.level);

  Ciphertext out;
  out.level = first.level;
  out.scale = first.scale * plain_scale;
  out.params_hash = first.params_hash;
  const std::size_t chain = rows(first.level);
  const std::size_t n = ctx.degree();
  out.parts.assign(2, RnsPoly(n, chain, false));
  std::vector<std::int64_t> ints(weights.size());
  for (std::size_t t = 0; t < weights.size(); ++t) ints[t] = scaled_integer(weights[t], plain_scale);

  for (std::size_t j = 0; j < chain; ++j) {
    const Modulus& q = ctx.chain_modulus(j);
    for (std::size_t t = 0; t < inputs.size(); ++t) {
      const u64 w = q.from_signed(ints[t]);
      const u64 ws = q.shoup(w);
      for (std::size_t part = 0; part < 2; ++part) {
        auto o = out.parts[part].residue(j);
        auto x = inputs[t]->parts[part].residue(j);
        for (std::size_t k = 0; k < n; ++k) o[k] = q.add(o[k], q.mul_shoup(x[k], w, ws));
      }
    }
  }
  return out;
}

}  // namespace hecnn::ckks
