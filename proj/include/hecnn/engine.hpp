// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "hecnn/backend.hpp"
#include "hecnn/model.hpp"

namespace hecnn::engine {

/// One handle per (row, col, channel) position; slot b of every cell belongs to image b.
struct PackedTensor {
  model::Shape shape;
  std::vector<Handle> cells;
  std::size_t batch = 0;

  const Handle& at(int i, int j, int k) const { return cells[shape.index(i, j, k)]; }
  int level() const { return cells.empty() ? 0 : cells.front().level(); }
};

/// Runs body(i) for i in [0, n) on up to `threads` workers; returns after all finish.
/// The first exception thrown by any worker is rethrown.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& body);

/// images holds `batch` tensors of `shape` back to back. Cell c is encrypted on
/// randomness stream c.
PackedTensor pack_encrypt(EvalBackend& backend, std::span<const double> images, std::size_t batch,
                          const model::Shape& shape, int threads = 1);

/// Decrypts every cell and regroups per image: result[b] is image b's HWC tensor.
std::vector<std::vector<double>> unpack_decrypt(const EvalBackend& backend, const PackedTensor& t, int threads = 1);

PackedTensor run_conv(EvalBackend& backend, const PackedTensor& in, const model::Conv2D& conv, int threads = 1);
PackedTensor run_activation(EvalBackend& backend, const PackedTensor& in, const model::Activation& act,
                            int threads = 1);
/// Window sums; refuses pools whose 1/area factor has not been folded away.
PackedTensor run_pool_sum(EvalBackend& backend, const PackedTensor& in, const model::AvgPool& pool,
                          int threads = 1);
PackedTensor run_dense(EvalBackend& backend, const PackedTensor& in, const model::Dense& dense, int threads = 1);
PackedTensor run_flatten(const PackedTensor& in);

/// Dispatches on the layer type. BatchNorm is refused.
PackedTensor run_layer(EvalBackend& backend, const PackedTensor& in, const model::Layer& layer, int threads = 1);

struct InferOptions {
  int threads = 1;
};

struct LayerReport {
  std::size_t layer = 0;
  std::string type;
  int planned = 0;
  int consumed = 0;
  int level_after = 0;
  double seconds = 0.0;
};

struct InferenceResult {
  std::vector<std::vector<double>> logits;
  std::vector<std::size_t> predictions;
  std::vector<LayerReport> layers;
  model::LevelPlan plan;
  int start_level = 0;
  int final_level = 0;
  double total_seconds = 0.0;
  double per_image_seconds = 0.0;
  /// Largest number of ciphertexts alive at once (input plus output of a layer).
  std::size_t peak_ciphertexts = 0;

  bool plan_matches() const;
};

/// Encrypts the batch, runs every layer and decrypts the logits. Throws budget_exceeded
/// before encrypting anything when the plan needs more levels than the backend has.
InferenceResult infer_encrypted(EvalBackend& backend, const model::ModelGraph& g, std::span<const double> images,
                                std::size_t batch, const InferOptions& options = {});

}  // namespace hecnn::engine
