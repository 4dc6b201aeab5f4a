// SPDX-License-Identifier: Apache-2.0
#include "hecnn/backend.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace hecnn {

std::string_view to_string(BackendKind kind) noexcept { return kind == BackendKind::ckks ? "ckks" : "sim"; }

// LevelLedger ----------------------------------------------------------------

void LevelLedger::record(std::string_view op, int before, int after) {
  std::lock_guard lock(mutex_);
  std::string label = scope_.empty() ? std::string(op) : scope_ + ":" + std::string(op);
  entries_.push_back({std::move(label), before, after});
  min_level_ = min_level_ < 0 ? after : std::min(min_level_, after);
}

void LevelLedger::set_scope(std::string scope) {
  std::lock_guard lock(mutex_);
  scope_ = std::move(scope);
}

std::vector<LedgerEntry> LevelLedger::entries() const {
  std::lock_guard lock(mutex_);
  return entries_;
}

std::size_t LevelLedger::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

int LevelLedger::final_level() const {
  std::lock_guard lock(mutex_);
  return min_level_ < 0 ? top_level_ : std::min(min_level_, top_level_);
}

void LevelLedger::clear() {
  std::lock_guard lock(mutex_);
  entries_.clear();
  min_level_ = -1;
}

std::string LevelLedger::to_jsonl() const {
  std::lock_guard lock(mutex_);
  std::ostringstream out;
  for (const auto& e : entries_) {
    out << "{\"op\": \"" << e.op << "\", \"before\": " << e.before << ", \"after\": " << e.after << "}\n";
  }
  return out.str();
}

// EvalBackend ------------------------------------------------------------------

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::atomic<std::uint64_t> next_backend_id{1};

}  // namespace

EvalBackend::EvalBackend(ckks::CkksParams params)
    : params_(std::move(params)), id_(next_backend_id.fetch_add(1)), ledger_(params_.level()) {
  params_.validate();
  double acc = 0.0;
  for (auto q : params_.modulus_chain) {
    acc += std::log2(static_cast<double>(q));
    log_q_prefix_.push_back(acc);
  }
}

double EvalBackend::prime_at(int level) const noexcept {
  return static_cast<double>(params_.modulus_chain[static_cast<std::size_t>(level)]);
}

void EvalBackend::check_owned(const Handle& h) const {
  if (!h.valid() || h.owner_ != id_) throw Error(ErrorCode::backend_mismatch, "handle belongs to another backend");
}

void EvalBackend::check_same(const Handle& a, const Handle& b) const {
  check_owned(a);
  check_owned(b);
  if (a.level_ != b.level_) {
    throw Error(ErrorCode::level_mismatch,
                "levels " + std::to_string(a.level_) + " and " + std::to_string(b.level_) + " differ");
  }
  if (std::abs(a.scale_ - b.scale_) > ckks::kScaleTolerance * std::max(a.scale_, b.scale_)) {
    throw Error(ErrorCode::scale_mismatch, "operand scales differ");
  }
}

void EvalBackend::check_can_multiply(const Handle& a, double result_scale) const {
  if (a.level_ < 1) throw Error(ErrorCode::level_exhausted, "multiplication needs level >= 1");
  if (std::log2(result_scale) + 2.0 >= log_q_prefix_[static_cast<std::size_t>(a.level_)]) {
    throw Error(ErrorCode::encode_overflow, "product scale overflows the modulus");
  }
}

Handle EvalBackend::make(Payload payload, int level, double scale) const {
  Handle h;
  h.owner_ = id_;
  h.level_ = level;
  h.scale_ = scale;
  h.payload_ = std::make_shared<const Payload>(std::move(payload));
  return h;
}

Handle EvalBackend::encrypt(std::span<const double> values, std::optional<std::uint64_t> stream) {
  if (values.size() > slot_count()) throw Error(ErrorCode::invalid_argument, "more values than slots");
  const std::uint64_t s = stream ? *stream : next_stream_.fetch_add(1);
  return make(do_encrypt(values, params_.scale(), s), top_level(), params_.scale());
}

std::vector<double> EvalBackend::decrypt(const Handle& h) const {
  check_owned(h);
  return do_decrypt(*h.payload_, h.scale_, h.level_);
}

Handle EvalBackend::add(const Handle& a, const Handle& b) {
  check_same(a, b);
  Handle out = make(do_add(*a.payload_, *b.payload_), a.level_, a.scale_);
  ledger_.record("add", a.level_, out.level_);
  return out;
}

Handle EvalBackend::add_plain(const Handle& a, std::span<const double> values) {
  check_owned(a);
  if (values.size() > slot_count()) throw Error(ErrorCode::invalid_argument, "more values than slots");
  Handle out = make(do_add_plain(*a.payload_, values, a.scale_, a.level_), a.level_, a.scale_);
  ledger_.record("add_plain", a.level_, out.level_);
  return out;
}

Handle EvalBackend::add_scalar(const Handle& a, double value) {
  check_owned(a);
  Handle out = make(do_add_scalar(*a.payload_, value), a.level_, a.scale_);
  ledger_.record("add_scalar", a.level_, out.level_);
  return out;
}

Handle EvalBackend::neg(const Handle& a) {
  check_owned(a);
  Handle out = make(do_neg(*a.payload_), a.level_, a.scale_);
  ledger_.record("neg", a.level_, out.level_);
  return out;
}

Handle EvalBackend::mul(const Handle& a, const Handle& b) {
  check_same(a, b);
  const double raw = a.scale_ * b.scale_;
  check_can_multiply(a, raw);
  Handle out = make(do_mul(*a.payload_, *b.payload_), a.level_ - 1, raw / prime_at(a.level_));
  ledger_.record("mul", a.level_, out.level_);
  return out;
}

Handle EvalBackend::mul_plain(const Handle& a, std::span<const double> values, std::optional<double> target_scale) {
  check_owned(a);
  if (values.size() > slot_count()) throw Error(ErrorCode::invalid_argument, "more values than slots");
  const double q = a.level_ >= 1 ? prime_at(a.level_) : 1.0;
  const double plain_scale = target_scale.value_or(a.scale_) * q / a.scale_;
  check_can_multiply(a, a.scale_ * plain_scale);
  Handle out = make(do_mul_plain(*a.payload_, values, plain_scale, a.level_), a.level_ - 1,
                    a.scale_ * plain_scale / q);
  ledger_.record("mul_plain", a.level_, out.level_);
  return out;
}

Handle EvalBackend::mul_scalar(const Handle& a, double value, std::optional<double> target_scale) {
  check_owned(a);
  const double q = a.level_ >= 1 ? prime_at(a.level_) : 1.0;
  const double plain_scale = target_scale.value_or(a.scale_) * q / a.scale_;
  check_can_multiply(a, a.scale_ * plain_scale);
  Handle out = make(do_mul_scalar(*a.payload_, value, plain_scale), a.level_ - 1, a.scale_ * plain_scale / q);
  ledger_.record("mul_scalar", a.level_, out.level_);
  return out;
}

Handle EvalBackend::linear_combination(std::span<const Handle* const> inputs, std::span<const double> weights,
                                       double bias) {
  if (inputs.empty() || inputs.size() != weights.size()) {
    throw Error(ErrorCode::invalid_argument, "need one weight per input");
  }
  const Handle& first = *inputs.front();
  for (const Handle* h : inputs) check_same(first, *h);
  const double q = first.level_ >= 1 ? prime_at(first.level_) : 1.0;
  const double plain_scale = q;
  check_can_multiply(first, first.scale_ * plain_scale);
  std::vector<const Payload*> payloads;
  payloads.reserve(inputs.size());
  for (const Handle* h : inputs) payloads.push_back(h->payload_.get());
  Handle out = make(do_linear_combination(payloads, weights, plain_scale, bias), first.level_ - 1,
                    first.scale_ * plain_scale / q);
  ledger_.record("linear", first.level_, out.level_);
  return out;
}

// SimBackend -------------------------------------------------------------------

namespace {

const SimVector& sim(const Handle::Payload& p) { return std::get<SimVector>(p); }

template <typename F>
SimVector zip(const SimVector& a, const SimVector& b, F f) {
  SimVector out;
  out.head.resize(std::max(a.head.size(), b.head.size()));
  for (std::size_t i = 0; i < out.head.size(); ++i) out.head[i] = f(a.at(i), b.at(i));
  out.tail = f(a.tail, b.tail);
  return out;
}

template <typename F>
SimVector map(const SimVector& a, F f) {
  SimVector out;
  out.head.resize(a.head.size());
  for (std::size_t i = 0; i < a.head.size(); ++i) out.head[i] = f(a.head[i]);
  out.tail = f(a.tail);
  return out;
}

SimVector from_values(std::span<const double> v) { return SimVector{{v.begin(), v.end()}, 0.0}; }

}  // namespace

SimBackend::Payload SimBackend::do_encrypt(std::span<const double> values, double, std::uint64_t) {
  return from_values(values);
}

std::vector<double> SimBackend::do_decrypt(const Payload& p, double, int) const {
  const SimVector& v = sim(p);
  std::vector<double> out(slot_count());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v.at(i);
  return out;
}

SimBackend::Payload SimBackend::do_add(const Payload& a, const Payload& b) const {
  return zip(sim(a), sim(b), [](double x, double y) { return x + y; });
}

SimBackend::Payload SimBackend::do_add_plain(const Payload& a, std::span<const double> v, double, int) const {
  return zip(sim(a), from_values(v), [](double x, double y) { return x + y; });
}

SimBackend::Payload SimBackend::do_add_scalar(const Payload& a, double value) const {
  return map(sim(a), [value](double x) { return x + value; });
}

SimBackend::Payload SimBackend::do_neg(const Payload& a) const {
  return map(sim(a), [](double x) { return -x; });
}

SimBackend::Payload SimBackend::do_mul(const Payload& a, const Payload& b) const {
  return zip(sim(a), sim(b), [](double x, double y) { return x * y; });
}

SimBackend::Payload SimBackend::do_mul_plain(const Payload& a, std::span<const double> v, double, int) const {
  return zip(sim(a), from_values(v), [](double x, double y) { return x * y; });
}

SimBackend::Payload SimBackend::do_mul_scalar(const Payload& a, double value, double) const {
  return map(sim(a), [value](double x) { return x * value; });
}

SimBackend::Payload SimBackend::do_linear_combination(std::span<const Payload* const> inputs,
                                                      std::span<const double> weights, double, double bias) const {
  std::size_t width = 0;
  for (const Payload* p : inputs) width = std::max(width, sim(*p).head.size());
  SimVector acc;
  acc.head.assign(width, 0.0);
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    const SimVector& x = sim(*inputs[t]);
    const double w = weights[t];
    for (std::size_t i = 0; i < width; ++i) acc.head[i] = acc.head[i] + x.at(i) * w;
    acc.tail = acc.tail + x.tail * w;
  }
  return map(acc, [bias](double x) { return x + bias; });
}

// CkksBackend ------------------------------------------------------------------

namespace {

const ckks::Ciphertext& ct(const Handle::Payload& p) { return std::get<ckks::Ciphertext>(p); }

}  // namespace

CkksBackend::CkksBackend(std::shared_ptr<const ckks::CkksContext> ctx, std::shared_ptr<const ckks::KeySet> keys,
                         std::uint64_t encryption_seed)
    : EvalBackend(ctx->params()), ctx_(std::move(ctx)), keys_(std::move(keys)), seed_(encryption_seed) {
  if (keys_->secret.params_hash != ctx_->params().hash()) {
    throw Error(ErrorCode::params_mismatch, "keys were generated under other parameters");
  }
}

CkksBackend::Payload CkksBackend::do_encrypt(std::span<const double> values, double scale, std::uint64_t stream) {
  ckks::Prng prng(splitmix(seed_ ^ splitmix(stream)));
  return ckks::encrypt(*ctx_, keys_->pub, ckks::encode(*ctx_, values, scale, ctx_->top_level()), prng);
}

std::vector<double> CkksBackend::do_decrypt(const Payload& p, double, int) const {
  return ckks::decode(*ctx_, ckks::decrypt(*ctx_, keys_->secret, ct(p)));
}

CkksBackend::Payload CkksBackend::do_add(const Payload& a, const Payload& b) const {
  return ckks::add(*ctx_, ct(a), ct(b));
}

CkksBackend::Payload CkksBackend::do_add_plain(const Payload& a, std::span<const double> v, double scale,
                                               int level) const {
  return ckks::add_plain(*ctx_, ct(a), ckks::encode(*ctx_, v, scale, level));
}

CkksBackend::Payload CkksBackend::do_add_scalar(const Payload& a, double value) const {
  return ckks::add_const(*ctx_, ct(a), value);
}

CkksBackend::Payload CkksBackend::do_neg(const Payload& a) const { return ckks::negate(*ctx_, ct(a)); }

CkksBackend::Payload CkksBackend::do_mul(const Payload& a, const Payload& b) const {
  return ckks::multiply(*ctx_, ct(a), ct(b), keys_->relin);
}

CkksBackend::Payload CkksBackend::do_mul_plain(const Payload& a, std::span<const double> v, double plain_scale,
                                               int level) const {
  return ckks::multiply_plain(*ctx_, ct(a), ckks::encode(*ctx_, v, plain_scale, level));
}

CkksBackend::Payload CkksBackend::do_mul_scalar(const Payload& a, double value, double plain_scale) const {
  return ckks::rescale(*ctx_, ckks::multiply_const_raw(*ctx_, ct(a), value, plain_scale));
}

CkksBackend::Payload CkksBackend::do_linear_combination(std::span<const Payload* const> inputs,
                                                        std::span<const double> weights, double plain_scale,
                                                        double bias) const {
  std::vector<const ckks::Ciphertext*> cts;
  cts.reserve(inputs.size());
  for (const Payload* p : inputs) cts.push_back(&ct(*p));
  const ckks::Ciphertext sum = ckks::rescale(*ctx_, ckks::linear_combination_raw(*ctx_, cts, weights, plain_scale));
  return ckks::add_const(*ctx_, sum, bias);
}

// Polynomial activations ---------------------------------------------------------

int monic_poly_depth(const polyfit::Polynomial& p) {
  const int d = p.degree();
  if (d <= 0) return 0;
  if (p.leading() != 1.0) {
    throw Error(ErrorCode::not_monic, "leading coefficient " + std::to_string(p.leading()) + " is not 1; fold it first");
  }
  if (d == 1) return 0;
  if (d == 2) return 1;
  if (d == 4 && p.coeffs[3] == 0.0) return 2;
  throw Error(ErrorCode::not_monic, "only monic x^4 + b x^2 + c x + d and x^2 + c x + d schedules exist");
}

namespace {

struct BackendOps {
  EvalBackend& backend;
  Handle mul(const Handle& a, const Handle& b) { return backend.mul(a, b); }
  Handle mul_scalar(const Handle& a, double v, double target) { return backend.mul_scalar(a, v, target); }
  Handle add(const Handle& a, const Handle& b) { return backend.add(a, b); }
  Handle add_scalar(const Handle& a, double v) { return backend.add_scalar(a, v); }
  Handle neg(const Handle& a) { return backend.neg(a); }
  double scale_of(const Handle& a) const { return a.scale(); }
};

struct PlainOps {
  double mul(double a, double b) const { return a * b; }
  double mul_scalar(double a, double v, double) const { return a * v; }
  double add(double a, double b) const { return a + b; }
  double add_scalar(double a, double v) const { return a + v; }
  double neg(double a) const { return -a; }
  double scale_of(double) const { return 1.0; }
};

}  // namespace

Handle eval_poly_monic(EvalBackend& backend, const Handle& x, const polyfit::Polynomial& p) {
  const int depth = monic_poly_depth(p);
  if (x.level() < depth) {
    throw Error(ErrorCode::level_exhausted, "polynomial needs " + std::to_string(depth) + " levels, handle has " +
                                                std::to_string(x.level()));
  }
  BackendOps ops{backend};
  return eval_monic_schedule(ops, x, p);
}

double eval_poly_monic_plain(double x, const polyfit::Polynomial& p) {
  PlainOps ops;
  return eval_monic_schedule(ops, x, p);
}

}  // namespace hecnn
