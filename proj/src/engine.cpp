// SPDX-License-Identifier: Apache-2.0
#include "hecnn/engine.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <mutex>
#include <thread>

#include "hecnn/error.hpp"

namespace hecnn::engine {

using model::Shape;

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& body) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(threads, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto run = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = n;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t t = 1; t < workers; ++t) pool.emplace_back(run);
  run();
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

PackedTensor pack_encrypt(EvalBackend& backend, std::span<const double> images, std::size_t batch,
                          const Shape& shape, int threads) {
  if (batch == 0) throw Error(ErrorCode::invalid_argument, "empty batch");
  if (batch > backend.slot_count()) {
    throw Error(ErrorCode::invalid_argument, "batch of " + std::to_string(batch) + " exceeds " +
                                                 std::to_string(backend.slot_count()) + " slots");
  }
  const std::size_t per = shape.size();
  if (images.size() != per * batch) throw Error(ErrorCode::shape_mismatch, "image buffer does not match batch shape");
  PackedTensor t{shape, std::vector<Handle>(per), batch};
  parallel_for(per, threads, [&](std::size_t cell) {
    std::vector<double> slots(batch);
    for (std::size_t b = 0; b < batch; ++b) slots[b] = images[b * per + cell];
    t.cells[cell] = backend.encrypt(slots, cell);
  });
  return t;
}

std::vector<std::vector<double>> unpack_decrypt(const EvalBackend& backend, const PackedTensor& t, int threads) {
  std::vector<std::vector<double>> out(t.batch, std::vector<double>(t.cells.size()));
  parallel_for(t.cells.size(), threads, [&](std::size_t cell) {
    const auto slots = backend.decrypt(t.cells[cell]);
    for (std::size_t b = 0; b < t.batch; ++b) out[b][cell] = slots[b];
  });
  return out;
}

namespace {

void expect_shape(const PackedTensor& in, const model::Layer& layer) {
  if (in.cells.size() != in.shape.size()) throw Error(ErrorCode::shape_mismatch, "packed tensor is incomplete");
  (void)model::output_shape(layer, in.shape);
}

}  // namespace

PackedTensor run_conv(EvalBackend& backend, const PackedTensor& in, const model::Conv2D& conv, int threads) {
  expect_shape(in, conv);
  const Shape out_shape = model::output_shape(conv, in.shape);
  PackedTensor out{out_shape, std::vector<Handle>(out_shape.size()), in.batch};
  parallel_for(out_shape.size(), threads, [&](std::size_t cell) {
    const int o = static_cast<int>(cell % out_shape.c);
    const int ox = static_cast<int>(cell / out_shape.c % out_shape.w);
    const int oy = static_cast<int>(cell / out_shape.c / out_shape.w);
    std::vector<const Handle*> inputs;
    std::vector<double> weights;
    for (int ky = 0; ky < conv.kernel_h; ++ky) {
      const int iy = oy * conv.stride + ky - conv.padding;
      if (iy < 0 || iy >= in.shape.h) continue;
      for (int kx = 0; kx < conv.kernel_w; ++kx) {
        const int ix = ox * conv.stride + kx - conv.padding;
        if (ix < 0 || ix >= in.shape.w) continue;
        for (int i = 0; i < conv.in_channels; ++i) {
          inputs.push_back(&in.at(iy, ix, i));
          weights.push_back(conv.weight(o, i, ky, kx));
        }
      }
    }
    out.cells[cell] = backend.linear_combination(inputs, weights, conv.bias[static_cast<std::size_t>(o)]);
  });
  return out;
}

PackedTensor run_activation(EvalBackend& backend, const PackedTensor& in, const model::Activation& act,
                            int threads) {
  (void)monic_poly_depth(act.poly);
  PackedTensor out{in.shape, std::vector<Handle>(in.cells.size()), in.batch};
  parallel_for(in.cells.size(), threads,
               [&](std::size_t cell) { out.cells[cell] = eval_poly_monic(backend, in.cells[cell], act.poly); });
  return out;
}

PackedTensor run_pool_sum(EvalBackend& backend, const PackedTensor& in, const model::AvgPool& pool, int threads) {
  if (!pool.folded && pool.area() != 1) {
    throw Error(ErrorCode::unfolded_pool, "average pool still carries its 1/area factor; run fold_avgpool first");
  }
  expect_shape(in, pool);
  const Shape out_shape = model::output_shape(pool, in.shape);
  PackedTensor out{out_shape, std::vector<Handle>(out_shape.size()), in.batch};
  parallel_for(out_shape.size(), threads, [&](std::size_t cell) {
    const int k = static_cast<int>(cell % out_shape.c);
    const int ox = static_cast<int>(cell / out_shape.c % out_shape.w);
    const int oy = static_cast<int>(cell / out_shape.c / out_shape.w);
    Handle acc;
    for (int dy = 0; dy < pool.pool_h; ++dy) {
      for (int dx = 0; dx < pool.pool_w; ++dx) {
        const Handle& v = in.at(oy * pool.stride + dy, ox * pool.stride + dx, k);
        acc = acc.valid() ? backend.add(acc, v) : v;
      }
    }
    out.cells[cell] = acc;
  });
  return out;
}

PackedTensor run_dense(EvalBackend& backend, const PackedTensor& in, const model::Dense& dense, int threads) {
  expect_shape(in, dense);
  const Shape out_shape = model::output_shape(dense, in.shape);
  PackedTensor out{out_shape, std::vector<Handle>(out_shape.size()), in.batch};
  std::vector<const Handle*> inputs;
  inputs.reserve(in.cells.size());
  for (const auto& h : in.cells) inputs.push_back(&h);
  parallel_for(static_cast<std::size_t>(dense.units), threads, [&](std::size_t o) {
    const std::span<const double> row(dense.weights.data() + o * static_cast<std::size_t>(dense.in_features),
                                      static_cast<std::size_t>(dense.in_features));
    out.cells[o] = backend.linear_combination(inputs, row, dense.bias[o]);
  });
  return out;
}

PackedTensor run_flatten(const PackedTensor& in) {
  PackedTensor out = in;
  out.shape = {1, 1, static_cast<int>(in.shape.size())};
  return out;
}

PackedTensor run_layer(EvalBackend& backend, const PackedTensor& in, const model::Layer& layer, int threads) {
  if (const auto* c = std::get_if<model::Conv2D>(&layer)) return run_conv(backend, in, *c, threads);
  if (const auto* a = std::get_if<model::Activation>(&layer)) return run_activation(backend, in, *a, threads);
  if (const auto* p = std::get_if<model::AvgPool>(&layer)) return run_pool_sum(backend, in, *p, threads);
  if (const auto* d = std::get_if<model::Dense>(&layer)) return run_dense(backend, in, *d, threads);
  if (std::holds_alternative<model::Flatten>(layer)) return run_flatten(in);
  throw Error(ErrorCode::unfused_batchnorm, "BatchNorm must be fused before encrypted inference");
}

bool InferenceResult::plan_matches() const {
  if (layers.size() != plan.per_layer.size()) return false;
  for (const auto& l : layers) {
    if (l.consumed != l.planned) return false;
  }
  return start_level - final_level == plan.total;
}

InferenceResult infer_encrypted(EvalBackend& backend, const model::ModelGraph& g, std::span<const double> images,
                                std::size_t batch, const InferOptions& options) {
  using clock = std::chrono::steady_clock;
  InferenceResult result;
  result.plan = model::plan_levels(g);
  if (result.plan.total > backend.top_level()) {
    throw Error(ErrorCode::budget_exceeded, "model needs " + std::to_string(result.plan.total) +
                                                " levels but parameters '" + backend.params().name + "' provide " +
                                                std::to_string(backend.top_level()));
  }
  const auto shapes = model::infer_shapes(g);
  const auto t0 = clock::now();
  PackedTensor x = pack_encrypt(backend, images, batch, g.input_shape, options.threads);
  result.start_level = x.level();
  result.peak_ciphertexts = x.cells.size();
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    const auto& layer = g.layers[i];
    const std::string type(model::layer_type(layer));
    backend.ledger().set_scope(std::to_string(i) + ":" + type);
    const auto l0 = clock::now();
    const int before = x.level();
    PackedTensor y = run_layer(backend, x, layer, options.threads);
    const std::size_t live = x.cells.size() + (std::holds_alternative<model::Flatten>(layer) ? 0 : y.cells.size());
    result.peak_ciphertexts = std::max(result.peak_ciphertexts, live);
    x = std::move(y);
    result.layers.push_back({i, type, result.plan.per_layer[i].levels, before - x.level(), x.level(),
                             std::chrono::duration<double>(clock::now() - l0).count()});
  }
  backend.ledger().set_scope("");
  result.final_level = x.level();
  result.logits = unpack_decrypt(backend, x, options.threads);
  result.total_seconds = std::chrono::duration<double>(clock::now() - t0).count();
  result.per_image_seconds = result.total_seconds / static_cast<double>(batch);
  result.predictions.reserve(batch);
  for (const auto& l : result.logits) result.predictions.push_back(model::argmax(l));
  return result;
}

}  // namespace hecnn::engine
