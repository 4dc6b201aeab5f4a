// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "hecnn/ckks/context.hpp"

namespace hecnn::ckks {

/// Encoded slot vector; the polynomial is kept in NTT form over chain primes 0..level.
struct Plaintext {
  RnsPoly poly;
  double scale = 1.0;
  int level = 0;
};

/// Two components after every exposed multiplication; three only between a raw product
/// and relinearize(). NTT form over chain primes 0..level.
struct Ciphertext {
  std::vector<RnsPoly> parts;
  double scale = 1.0;
  int level = 0;
  u64 params_hash = 0;

  std::size_t size() const noexcept { return parts.size(); }
};

struct SecretKey {
  RnsPoly s;  // ternary, NTT form over all chain primes and the special prime
  u64 params_hash = 0;
};

struct PublicKey {
  RnsPoly b, a;  // b = -a s + e
  u64 params_hash = 0;
};

/// One key per chain prime: encrypts P * s^2 in the digit of that prime.
struct RelinKey {
  std::vector<RnsPoly> b, a;
  u64 params_hash = 0;
};

struct KeySet {
  SecretKey secret;
  PublicKey pub;
  RelinKey relin;
};

/// Deterministic randomness source. Concurrent encryptions need separate instances.
class Prng {
 public:
  explicit Prng(std::uint64_t seed) : engine_(seed) {}

  u64 uniform(u64 bound) { return std::uniform_int_distribution<u64>(0, bound - 1)(engine_); }
  std::int64_t ternary() { return static_cast<std::int64_t>(uniform(3)) - 1; }
  std::int64_t gaussian();
  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

inline constexpr double kNoiseStddev = 3.2;

// Encoding -----------------------------------------------------------------

/// Encodes up to N/2 real values (missing slots are zero). Throws encode_overflow when
/// values * scale do not fit the modulus at `level`.
Plaintext encode(const CkksContext& ctx, std::span<const double> values, double scale, int level);
/// Encodes the same value in every slot (a constant polynomial).
Plaintext encode_constant(const CkksContext& ctx, double value, double scale, int level);
std::vector<double> decode(const CkksContext& ctx, const Plaintext& pt);

// Keys and encryption -------------------------------------------------------

KeySet keygen(const CkksContext& ctx, std::uint64_t seed);

/// Public-key encryption computed modulo Q*P and divided by P, which keeps fresh noise
/// at rounding size.
Ciphertext encrypt(const CkksContext& ctx, const PublicKey& pk, const Plaintext& pt, Prng& prng);
Plaintext decrypt(const CkksContext& ctx, const SecretKey& sk, const Ciphertext& ct);

// Evaluation ---------------------------------------------------------------

/// Relative tolerance under which two scales count as equal.
inline constexpr double kScaleTolerance = 1e-9;

Ciphertext add(const CkksContext& ctx, const Ciphertext& a, const Ciphertext& b);
Ciphertext sub(const CkksContext& ctx, const Ciphertext& a, const Ciphertext& b);
Ciphertext add_plain(const CkksContext& ctx, const Ciphertext& a, const Plaintext& p);
/// Adds value to every slot, encoded at the ciphertext's scale.
Ciphertext add_const(const CkksContext& ctx, const Ciphertext& a, double value);
Ciphertext negate(const CkksContext& ctx, const Ciphertext& a);

/// Tensor product without relinearization or rescale; result has three parts.
Ciphertext multiply_raw(const CkksContext& ctx, const Ciphertext& a, const Ciphertext& b);
Ciphertext relinearize(const CkksContext& ctx, const Ciphertext& a, const RelinKey& rlk);
Ciphertext rescale(const CkksContext& ctx, const Ciphertext& a);

/// multiply_raw + relinearize + rescale; consumes one level.
Ciphertext multiply(const CkksContext& ctx, const Ciphertext& a, const Ciphertext& b, const RelinKey& rlk);
/// Plaintext product + rescale; consumes one level.
Ciphertext multiply_plain(const CkksContext& ctx, const Ciphertext& a, const Plaintext& p);
/// Multiplies every slot by value encoded at plain_scale, without rescale.
Ciphertext multiply_const_raw(const CkksContext& ctx, const Ciphertext& a, double value, double plain_scale);
/// sum_i weights[i] * inputs[i], each weight encoded at plain_scale, without rescale.
Ciphertext linear_combination_raw(const CkksContext& ctx, std::span<const Ciphertext* const> inputs,
                                  std::span<const double> weights, double plain_scale);

inline int level_of(const Ciphertext& ct) noexcept { return ct.level; }

}  // namespace hecnn::ckks
