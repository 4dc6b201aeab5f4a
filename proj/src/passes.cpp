// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "hecnn/error.hpp"
#include "hecnn/model.hpp"

namespace hecnn::model {

Conv2D fuse_conv_bn(const Conv2D& conv, const BatchNorm& bn) {
  if (bn.channels() != conv.out_channels) {
    throw Error(ErrorCode::shape_mismatch, "batch norm has " + std::to_string(bn.channels()) + " channels, conv has " +
                                               std::to_string(conv.out_channels) + " filters");
  }
  Conv2D fused = conv;
  const std::size_t per_filter = static_cast<std::size_t>(conv.in_channels) * conv.kernel_h * conv.kernel_w;
  for (int o = 0; o < conv.out_channels; ++o) {
    const double w_bn = bn.scale(o);
    const double b_bn = bn.shift(o);
    for (std::size_t k = 0; k < per_filter; ++k) fused.weights[o * per_filter + k] *= w_bn;
    fused.bias[static_cast<std::size_t>(o)] = conv.bias[static_cast<std::size_t>(o)] * w_bn + b_bn;
  }
  return fused;
}

ModelGraph fuse_batchnorm(const ModelGraph& g) {
  ModelGraph out{g.input_shape, {}};
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    const auto* conv = std::get_if<Conv2D>(&g.layers[i]);
    const auto* bn = i + 1 < g.layers.size() ? std::get_if<BatchNorm>(&g.layers[i + 1]) : nullptr;
    if (conv != nullptr && bn != nullptr) {
      out.layers.emplace_back(fuse_conv_bn(*conv, *bn));
      ++i;
    } else {
      out.layers.push_back(g.layers[i]);
    }
  }
  return out;
}

namespace {

void scale_weights(Layer& layer, double factor) {
  if (auto* c = std::get_if<Conv2D>(&layer)) {
    for (auto& w : c->weights) w *= factor;
  } else if (auto* d = std::get_if<Dense>(&layer)) {
    for (auto& w : d->weights) w *= factor;
  } else {
    throw Error(ErrorCode::not_foldable, std::string(layer_type(layer)) + " has no weights to fold into");
  }
}

bool is_weighted(const Layer& layer) { return std::holds_alternative<Conv2D>(layer) || std::holds_alternative<Dense>(layer); }

// Index of the first Conv2D/Dense after `from`, skipping only layers that commute with a
// uniform scale (AvgPool, Flatten).
std::size_t next_weighted(const ModelGraph& g, std::size_t from, bool allow_pool) {
  for (std::size_t j = from + 1; j < g.layers.size(); ++j) {
    if (is_weighted(g.layers[j])) return j;
    const bool passable =
        std::holds_alternative<Flatten>(g.layers[j]) || (allow_pool && std::holds_alternative<AvgPool>(g.layers[j]));
    if (!passable) break;
  }
  throw Error(ErrorCode::not_foldable, "layer " + std::to_string(from) + " has no weight-bearing successor");
}

}  // namespace

std::pair<Activation, Layer> monic_fold(const Activation& act, const Layer& successor) {
  const double a = act.poly.leading();
  if (act.poly.degree() < 2) throw Error(ErrorCode::invalid_argument, "monic folding needs degree >= 2");
  if (a == 0.0) throw Error(ErrorCode::invalid_argument, "leading coefficient is zero");
  Activation folded = act;
  for (auto& c : folded.poly.coeffs) c /= a;
  folded.poly.coeffs.back() = 1.0;
  folded.pre_fold_scale = act.pre_fold_scale * a;
  Layer next = successor;
  scale_weights(next, a);
  return {std::move(folded), std::move(next)};
}

ModelGraph fold_monic(const ModelGraph& g) {
  ModelGraph out = g;
  for (std::size_t i = 0; i < out.layers.size(); ++i) {
    auto* act = std::get_if<Activation>(&out.layers[i]);
    if (act == nullptr || act->poly.degree() < 2 || act->poly.leading() == 1.0) continue;
    const std::size_t j = next_weighted(out, i, true);
    auto [folded, next] = monic_fold(*act, out.layers[j]);
    out.layers[i] = std::move(folded);
    out.layers[j] = std::move(next);
  }
  return out;
}

ModelGraph fold_avgpool(const ModelGraph& g) {
  ModelGraph out = g;
  for (std::size_t i = 0; i < out.layers.size(); ++i) {
    auto* pool = std::get_if<AvgPool>(&out.layers[i]);
    if (pool == nullptr || pool->folded) continue;
    if (pool->area() > 1) {
      const std::size_t j = next_weighted(out, i, false);
      scale_weights(out.layers[j], 1.0 / pool->area());
    }
    std::get<AvgPool>(out.layers[i]).folded = true;
  }
  return out;
}

double clamp_value(double w) noexcept {
  if (w >= 0.0 && w <= kClampMagnitude) return kClampMagnitude;
  if (w < 0.0 && w > -kClampMagnitude) return -kClampMagnitude;
  return w;
}

ModelGraph clamp_small_weights(const ModelGraph& g) {
  ModelGraph out = g;
  auto clamp_all = [](std::vector<double>& v) {
    for (auto& w : v) w = clamp_value(w);
  };
  for (auto& layer : out.layers) {
    if (auto* c = std::get_if<Conv2D>(&layer)) {
      clamp_all(c->weights);
      clamp_all(c->bias);
    } else if (auto* d = std::get_if<Dense>(&layer)) {
      clamp_all(d->weights);
      clamp_all(d->bias);
    } else if (auto* bn = std::get_if<BatchNorm>(&layer)) {
      clamp_all(bn->gamma);
      clamp_all(bn->beta);
      clamp_all(bn->mean);
    }
  }
  return out;
}

ModelGraph optimize(const ModelGraph& g) {
  infer_shapes(g);
  return fold_monic(clamp_small_weights(fold_avgpool(fuse_batchnorm(g))));
}

}  // namespace hecnn::model
