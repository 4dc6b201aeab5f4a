// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "hecnn/ckks/scheme.hpp"
#include "hecnn/error.hpp"
#include "hecnn/polyfit.hpp"

namespace hecnn {

enum class BackendKind { ckks, sim };

std::string_view to_string(BackendKind kind) noexcept;

struct LedgerEntry {
  std::string op;
  int before = 0;
  int after = 0;

  friend bool operator==(const LedgerEntry&, const LedgerEntry&) = default;
};

/// Append-only record of every backend operation with the levels around it.
/// Thread-safe.
class LevelLedger {
 public:
  explicit LevelLedger(int top_level) : top_level_(top_level) {}

  void record(std::string_view op, int before, int after);
  /// Prefix for subsequent op labels ("conv0" gives "conv0:mul").
  void set_scope(std::string scope);

  std::vector<LedgerEntry> entries() const;
  std::size_t size() const;
  int top_level() const noexcept { return top_level_; }
  /// Lowest level reached by any recorded operation (top level when empty).
  int final_level() const;
  int consumption() const { return top_level_ - final_level(); }
  void clear();

  /// One {"op":..., "before":k, "after":k'} object per line.
  std::string to_jsonl() const;

 private:
  mutable std::mutex mutex_;
  int top_level_;
  int min_level_ = -1;
  std::string scope_;
  std::vector<LedgerEntry> entries_;
};

/// Exact slot vector: head values followed by `tail` repeated through the remaining slots.
struct SimVector {
  std::vector<double> head;
  double tail = 0.0;

  double at(std::size_t i) const noexcept { return i < head.size() ? head[i] : tail; }
};

/// Immutable value naming an encrypted (or simulated) slot vector of one backend.
class Handle {
 public:
  using Payload = std::variant<SimVector, ckks::Ciphertext>;

  Handle() = default;

  int level() const noexcept { return level_; }
  double scale() const noexcept { return scale_; }
  bool valid() const noexcept { return payload_ != nullptr; }

 private:
  friend class EvalBackend;

  std::uint64_t owner_ = 0;
  int level_ = 0;
  double scale_ = 0.0;
  std::shared_ptr<const Payload> payload_;
};

/// Evaluation interface shared by the CKKS scheme and the exact simulator. All level and
/// scale bookkeeping lives here so both backends account identically:
///  - add/add_plain/add_scalar/neg keep level and scale;
///  - mul consumes one level, scale s1*s2/q_l;
///  - mul_plain/mul_scalar/linear_combination consume one level; the plaintext is encoded at
///    scale target*q_l/s so the result lands exactly on the target scale (default: s).
class EvalBackend {
 public:
  virtual ~EvalBackend() = default;
  EvalBackend(const EvalBackend&) = delete;
  EvalBackend& operator=(const EvalBackend&) = delete;

  virtual BackendKind kind() const noexcept = 0;
  const ckks::CkksParams& params() const noexcept { return params_; }
  int top_level() const noexcept { return params_.level(); }
  std::size_t slot_count() const noexcept { return params_.slot_count(); }

  LevelLedger& ledger() noexcept { return ledger_; }
  const LevelLedger& ledger() const noexcept { return ledger_; }

  /// Encrypts at the top level and scale 2^scale_bits. `stream` selects an independent
  /// randomness stream so parallel callers stay deterministic.
  Handle encrypt(std::span<const double> values, std::optional<std::uint64_t> stream = {});
  /// All slot_count() slots.
  std::vector<double> decrypt(const Handle& h) const;

  Handle add(const Handle& a, const Handle& b);
  Handle add_plain(const Handle& a, std::span<const double> values);
  Handle add_scalar(const Handle& a, double value);
  Handle neg(const Handle& a);
  Handle mul(const Handle& a, const Handle& b);
  Handle mul_plain(const Handle& a, std::span<const double> values, std::optional<double> target_scale = {});
  Handle mul_scalar(const Handle& a, double value, std::optional<double> target_scale = {});
  /// sum_i weights[i] * inputs[i] accumulated before a single rescale, then + bias.
  Handle linear_combination(std::span<const Handle* const> inputs, std::span<const double> weights, double bias);

 protected:
  EvalBackend(ckks::CkksParams params);

  using Payload = Handle::Payload;

  virtual Payload do_encrypt(std::span<const double> values, double scale, std::uint64_t stream) = 0;
  virtual std::vector<double> do_decrypt(const Payload& p, double scale, int level) const = 0;
  virtual Payload do_add(const Payload& a, const Payload& b) const = 0;
  virtual Payload do_add_plain(const Payload& a, std::span<const double> v, double scale, int level) const = 0;
  virtual Payload do_add_scalar(const Payload& a, double value) const = 0;
  virtual Payload do_neg(const Payload& a) const = 0;
  virtual Payload do_mul(const Payload& a, const Payload& b) const = 0;
  virtual Payload do_mul_plain(const Payload& a, std::span<const double> v, double plain_scale,
                               int level) const = 0;
  virtual Payload do_mul_scalar(const Payload& a, double value, double plain_scale) const = 0;
  virtual Payload do_linear_combination(std::span<const Payload* const> inputs, std::span<const double> weights,
                                        double plain_scale, double bias) const = 0;

 private:
  void check_owned(const Handle& h) const;
  void check_same(const Handle& a, const Handle& b) const;
  void check_can_multiply(const Handle& a, double result_scale) const;
  double prime_at(int level) const noexcept;
  Handle make(Payload payload, int level, double scale) const;

  ckks::CkksParams params_;
  std::vector<double> log_q_prefix_;
  std::uint64_t id_;
  LevelLedger ledger_;
  std::atomic<std::uint64_t> next_stream_{0};
};

/// Exact plaintext SIMD simulator with the same level/scale accounting as the scheme.
class SimBackend final : public EvalBackend {
 public:
  explicit SimBackend(ckks::CkksParams params) : EvalBackend(std::move(params)) {}

  BackendKind kind() const noexcept override { return BackendKind::sim; }

 private:
  Payload do_encrypt(std::span<const double> values, double scale, std::uint64_t stream) override;
  std::vector<double> do_decrypt(const Payload& p, double scale, int level) const override;
  Payload do_add(const Payload& a, const Payload& b) const override;
  Payload do_add_plain(const Payload& a, std::span<const double> v, double scale, int level) const override;
  Payload do_add_scalar(const Payload& a, double value) const override;
  Payload do_neg(const Payload& a) const override;
  Payload do_mul(const Payload& a, const Payload& b) const override;
  Payload do_mul_plain(const Payload& a, std::span<const double> v, double plain_scale, int level) const override;
  Payload do_mul_scalar(const Payload& a, double value, double plain_scale) const override;
  Payload do_linear_combination(std::span<const Payload* const> inputs, std::span<const double> weights,
                                double plain_scale, double bias) const override;
};

/// RNS-CKKS backend. Holds the full key set, acting as both client and server.
class CkksBackend final : public EvalBackend {
 public:
  CkksBackend(std::shared_ptr<const ckks::CkksContext> ctx, std::shared_ptr<const ckks::KeySet> keys,
              std::uint64_t encryption_seed);

  BackendKind kind() const noexcept override { return BackendKind::ckks; }
  const ckks::CkksContext& context() const noexcept { return *ctx_; }

 private:
  Payload do_encrypt(std::span<const double> values, double scale, std::uint64_t stream) override;
  std::vector<double> do_decrypt(const Payload& p, double scale, int level) const override;
  Payload do_add(const Payload& a, const Payload& b) const override;
  Payload do_add_plain(const Payload& a, std::span<const double> v, double scale, int level) const override;
  Payload do_add_scalar(const Payload& a, double value) const override;
  Payload do_neg(const Payload& a) const override;
  Payload do_mul(const Payload& a, const Payload& b) const override;
  Payload do_mul_plain(const Payload& a, std::span<const double> v, double plain_scale, int level) const override;
  Payload do_mul_scalar(const Payload& a, double value, double plain_scale) const override;
  Payload do_linear_combination(std::span<const Payload* const> inputs, std::span<const double> weights,
                                double plain_scale, double bias) const override;

  std::shared_ptr<const ckks::CkksContext> ctx_;
  std::shared_ptr<const ckks::KeySet> keys_;
  std::uint64_t seed_;
};

// Polynomial activations ----------------------------------------------------

/// Levels consumed by eval_poly_monic: 2 for degree 4, 1 for degree 2, 0 for degree <= 1.
/// Throws not_monic for shapes the schedule does not cover (non-unit leading coefficient,
/// degree 3, or a nonzero cubic term).
int monic_poly_depth(const polyfit::Polynomial& p);

/// Depth-minimal schedule, written once against an operation policy so the backend path and
/// the plaintext reference perform the same floating-point operations in the same order.
///   t = x*x; x4 = t*t; acc = x4 + b*t + (c*x)*1 + d      (degree 4, coeffs [d, c, b, 0, 1])
///   t = x*x; acc = t + c*x + d                           (degree 2, coeffs [d, c, 1])
template <typename Ops, typename Value>
Value eval_monic_schedule(Ops& ops, const Value& x, const polyfit::Polynomial& p) {
  const auto& c = p.coeffs;
  switch (monic_poly_depth(p)) {
    case 0: {
      if (p.degree() <= 0) {
        Value zero = ops.add(x, ops.neg(x));
        return ops.add_scalar(zero, c.empty() ? 0.0 : c[0]);
      }
      return c[0] != 0.0 ? ops.add_scalar(x, c[0]) : x;
    }
    case 1: {
      Value acc = ops.mul(x, x);
      if (c[1] != 0.0) acc = ops.add(acc, ops.mul_scalar(x, c[1], ops.scale_of(acc)));
      if (c[0] != 0.0) acc = ops.add_scalar(acc, c[0]);
      return acc;
    }
    default: {
      const Value t = ops.mul(x, x);
      Value acc = ops.mul(t, t);
      if (c[2] != 0.0) acc = ops.add(acc, ops.mul_scalar(t, c[2], ops.scale_of(acc)));
      if (c[1] != 0.0) {
        const Value cx = ops.mul_scalar(x, c[1], ops.scale_of(x));
        acc = ops.add(acc, ops.mul_scalar(cx, 1.0, ops.scale_of(acc)));
      }
      if (c[0] != 0.0) acc = ops.add_scalar(acc, c[0]);
      return acc;
    }
  }
}

/// Evaluates a monic activation polynomial on a handle with the schedule above.
Handle eval_poly_monic(EvalBackend& backend, const Handle& x, const polyfit::Polynomial& p);

/// The same schedule on a plain double; bit-identical to the simulator.
double eval_poly_monic_plain(double x, const polyfit::Polynomial& p);

}  // namespace hecnn
