// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "hecnn/ckks/context.hpp"
#include "hecnn/ckks/ntt.hpp"
#include "hecnn/ckks/scheme.hpp"
#include "hecnn/ckks/serialize.hpp"
#include "hecnn/error.hpp"
#include "oracles.hpp"

using namespace hecnn;
using namespace hecnn::ckks;

namespace {

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b, std::size_t n) {
  double m = 0.0;
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

struct Fixture {
  std::shared_ptr<const CkksContext> ctx = CkksContext::create(preset("mnist-deg4", SecurityProfile::test_insecure));
  KeySet keys = keygen(*ctx, 1234);
  Prng prng{99};

  Ciphertext enc(const std::vector<double>& v) {
    return encrypt(*ctx, keys.pub, encode(*ctx, v, ctx->params().scale(), ctx->top_level()), prng);
  }
  std::vector<double> dec(const Ciphertext& ct) const { return decode(*ctx, decrypt(*ctx, keys.secret, ct)); }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

}  // namespace

TEST_CASE("modular arithmetic against 128-bit remainder") {
  std::mt19937_64 rng(3);
  for (u64 q : {u64{1073872897}, u64{1125899906826241}, (u64{1} << 60) - 93}) {
    const Modulus m(q);
    for (int i = 0; i < 2000; ++i) {
      const u64 a = rng() % q, b = rng() % q;
      CHECK(m.mul(a, b) == static_cast<u64>(static_cast<u128>(a) * b % q));
      CHECK(m.add(a, b) == (a + b) % q);
      const u64 w = rng() % q;
      CHECK(m.mul_shoup(a, w, m.shoup(w)) == m.mul(a, w));
    }
    CHECK(m.mul(m.inv(12345), 12345) == 1);
    CHECK(m.from_signed(-1) == q - 1);
  }
  CHECK(is_prime(1073872897));
  CHECK_FALSE(is_prime(1073872899));
  CHECK(is_prime((u64{1} << 61) - 1));
  CHECK_FALSE(is_prime(3215031751ULL));  // strong pseudoprime to bases 2, 3, 5, 7
}

TEST_CASE("NTT roundtrip and negacyclic convolution") {
  const std::size_t n = 64;
  const Modulus q(1073872897);  // 1 mod 2^15
  const NttTables ntt(q, n);
  std::mt19937_64 rng(5);
  std::vector<u64> a(n), b(n);
  for (auto& x : a) x = rng() % q.value();
  for (auto& x : b) x = rng() % q.value();
  std::vector<u64> expect(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const u64 p = q.mul(a[i], b[j]);
      const std::size_t k = (i + j) % n;
      expect[k] = i + j < n ? q.add(expect[k], p) : q.sub(expect[k], p);
    }
  }
  auto fa = a, fb = b;
  ntt.forward(fa);
  ntt.forward(fb);
  auto back = fa;
  ntt.inverse(back);
  CHECK(back == a);
  for (std::size_t i = 0; i < n; ++i) fa[i] = q.mul(fa[i], fb[i]);
  ntt.inverse(fa);
  CHECK(fa == expect);
  CHECK_THROWS_AS(find_primitive_root(Modulus(1073741827), 2 * n), Error);
}

TEST_CASE("parameter presets") {
  for (const auto& info : preset_table()) {
    CAPTURE(info.name);
    const auto p = preset(info.name);
    CHECK(p.ring_degree == 16384);
    CHECK(p.level() == info.level);
    CHECK(std::abs(p.log_q() - info.log_q) <= 5.0);
    CHECK(p.scale() == std::ldexp(1.0, 30));
    p.validate();
    const auto t = preset(info.name, SecurityProfile::test_insecure);
    CHECK(t.ring_degree == 8192);
    CHECK(t.level() == info.level);
    CHECK(t.hash() != p.hash());
  }
  CHECK_THROWS_AS(preset("nope"), Error);
  auto bad = preset("mnist-baseline");
  bad.modulus_chain[1] += 2;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("encoder matches direct canonical embedding") {
  const auto params = make_params("small", 64, 50, 1, 30, 60, SecurityProfile::test_insecure);
  const auto ctx = CkksContext::create(params);
  std::mt19937_64 rng(8);
  const auto values = oracle::uniform_vector(rng, 32, -3.0, 3.0);
  const Plaintext pt = encode(*ctx, values, params.scale(), 0);
  RnsPoly poly = pt.poly;
  ctx->from_ntt(poly);
  const u64 q = params.modulus_chain[0];
  std::vector<double> coeffs(64);
  for (std::size_t k = 0; k < 64; ++k) {
    const u64 r = poly.residue(0)[k];
    const double signed_r = r > q / 2 ? -static_cast<double>(q - r) : static_cast<double>(r);
    coeffs[k] = signed_r / params.scale();
  }
  const auto slots = oracle::embed(coeffs);
  for (std::size_t j = 0; j < 32; ++j) {
    CAPTURE(j);
    CHECK(std::abs(slots[j].real() - values[j]) < 1e-7);
    CHECK(std::abs(slots[j].imag()) < 1e-7);
  }
  CHECK(max_abs_diff(decode(*ctx, pt), values, 32) < 1e-7);
}

TEST_CASE("encode roundtrip and overflow") {
  auto& f = fixture();
  std::mt19937_64 rng(1);
  const auto v = oracle::uniform_vector(rng, f.ctx->params().slot_count(), -10.0, 10.0);
  const auto pt = encode(*f.ctx, v, f.ctx->params().scale(), f.ctx->top_level());
  CHECK(max_abs_diff(decode(*f.ctx, pt), v, v.size()) < 1e-4);
  const auto c = encode_constant(*f.ctx, -2.5, f.ctx->params().scale(), 3);
  for (double x : decode(*f.ctx, c)) CHECK(std::abs(x + 2.5) < 1e-6);
  CHECK_THROWS_AS(encode(*f.ctx, std::vector<double>{1e30}, f.ctx->params().scale(), 0), Error);
}

TEST_CASE("encrypt, add, multiply and rescale") {
  auto& f = fixture();
  std::mt19937_64 rng(2);
  const std::size_t n = f.ctx->params().slot_count();
  const auto a = oracle::uniform_vector(rng, n, -1.0, 1.0);
  const auto b = oracle::uniform_vector(rng, n, -1.0, 1.0);
  const auto ca = f.enc(a), cb = f.enc(b);
  CHECK(max_abs_diff(f.dec(ca), a, n) < 1e-4);

  std::vector<double> expect(n);
  for (std::size_t i = 0; i < n; ++i) expect[i] = a[i] + b[i];
  CHECK(max_abs_diff(f.dec(add(*f.ctx, ca, cb)), expect, n) < 1e-4);
  for (std::size_t i = 0; i < n; ++i) expect[i] = a[i] - b[i];
  CHECK(max_abs_diff(f.dec(sub(*f.ctx, ca, cb)), expect, n) < 1e-4);
  for (std::size_t i = 0; i < n; ++i) expect[i] = -a[i] + 0.75;
  CHECK(max_abs_diff(f.dec(add_const(*f.ctx, negate(*f.ctx, ca), 0.75)), expect, n) < 1e-4);

  const auto prod = multiply(*f.ctx, ca, cb, f.keys.relin);
  CHECK(prod.level == f.ctx->top_level() - 1);
  CHECK(prod.size() == 2);
  for (std::size_t i = 0; i < n; ++i) expect[i] = a[i] * b[i];
  CHECK(max_abs_diff(f.dec(prod), expect, n) < 1e-3);

  const auto pb = encode(*f.ctx, b, static_cast<double>(f.ctx->params().modulus_chain.back()), f.ctx->top_level());
  const auto pp = multiply_plain(*f.ctx, ca, pb);
  CHECK(pp.level == f.ctx->top_level() - 1);
  CHECK(std::abs(pp.scale / ca.scale - 1.0) < 1e-9);
  CHECK(max_abs_diff(f.dec(pp), expect, n) < 1e-4);
}

TEST_CASE("depth-L multiplication chain and level exhaustion") {
  auto& f = fixture();
  std::mt19937_64 rng(3);
  const std::size_t n = f.ctx->params().slot_count();
  const auto v = oracle::uniform_vector(rng, n, -1.0, 1.0);
  auto ct = f.enc(v);
  auto expect = v;
  for (int l = 0; l < f.ctx->top_level(); ++l) {
    ct = multiply(*f.ctx, ct, ct, f.keys.relin);
    for (auto& x : expect) x *= x;
  }
  CHECK(ct.level == 0);
  CHECK(max_abs_diff(f.dec(ct), expect, n) < 1e-2);
  try {
    (void)multiply(*f.ctx, ct, ct, f.keys.relin);
    FAIL("multiplication at level 0 was accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::level_exhausted);
  }
  const auto fresh = f.enc(v);
  CHECK_THROWS_AS(add(*f.ctx, fresh, ct), Error);
}

TEST_CASE("determinism and key separation") {
  auto& f = fixture();
  const KeySet again = keygen(*f.ctx, 1234);
  CHECK(again.secret.s == f.keys.secret.s);
  CHECK(again.pub.b == f.keys.pub.b);
  const std::vector<double> v{1.0, 2.0, 3.0};
  const auto pt = encode(*f.ctx, v, f.ctx->params().scale(), f.ctx->top_level());
  Prng p1(5), p2(5);
  CHECK(encrypt(*f.ctx, f.keys.pub, pt, p1).parts == encrypt(*f.ctx, f.keys.pub, pt, p2).parts);
  const KeySet other = keygen(*f.ctx, 4321);
  Prng p3(6);
  const auto wrong = decode(*f.ctx, decrypt(*f.ctx, other.secret, encrypt(*f.ctx, f.keys.pub, pt, p3)));
  CHECK(max_abs_diff(wrong, v, 3) > 1.0);
}

TEST_CASE("serialization roundtrip and parameter mismatch") {
  auto& f = fixture();
  const auto ct = f.enc({0.25, -0.5});
  std::stringstream ss;
  save(ss, ct);
  const auto back = load_ciphertext(ss, *f.ctx);
  CHECK(back.parts == ct.parts);
  CHECK(back.scale == ct.scale);
  CHECK(back.level == ct.level);

  std::stringstream ks;
  save(ks, f.keys.secret);
  save(ks, f.keys.pub);
  save(ks, f.keys.relin);
  CHECK(load_secret_key(ks, *f.ctx).s == f.keys.secret.s);
  CHECK(load_public_key(ks, *f.ctx).a == f.keys.pub.a);
  CHECK(load_relin_key(ks, *f.ctx).b == f.keys.relin.b);

  const auto other = CkksContext::create(preset("mnist-baseline", SecurityProfile::test_insecure));
  std::stringstream s2;
  save(s2, ct);
  CHECK_THROWS_AS(load_ciphertext(s2, *other), Error);
  std::stringstream junk("not a ciphertext at all");
  CHECK_THROWS_AS(load_ciphertext(junk, *f.ctx), Error);
}

TEST_CASE("paper ring degree spot check") {
  const auto ctx = CkksContext::create(preset("mnist-baseline"));
  const KeySet keys = keygen(*ctx, 7);
  Prng prng(8);
  std::mt19937_64 rng(4);
  const std::size_t n = ctx->params().slot_count();
  const auto v = oracle::uniform_vector(rng, n, -1.0, 1.0);
  const auto ct = encrypt(*ctx, keys.pub, encode(*ctx, v, ctx->params().scale(), ctx->top_level()), prng);
  CHECK(max_abs_diff(decode(*ctx, decrypt(*ctx, keys.secret, ct)), v, n) < 1e-4);
  const auto sq = multiply(*ctx, ct, ct, keys.relin);
  std::vector<double> expect(n);
  for (std::size_t i = 0; i < n; ++i) expect[i] = v[i] * v[i];
  CHECK(max_abs_diff(decode(*ctx, decrypt(*ctx, keys.secret, sq)), expect, n) < 1e-3);
  const auto zero = encrypt(*ctx, keys.pub, encode(*ctx, std::vector<double>{}, ctx->params().scale(), 0), prng);
  CHECK(max_abs_diff(decode(*ctx, decrypt(*ctx, keys.secret, zero)), std::vector<double>(n, 0.0), n) < 1e-4);
}
