// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <random>

#include "hecnn/error.hpp"
#include "hecnn/model.hpp"

namespace hecnn::model {

namespace {

double f32(double x) { return static_cast<double>(static_cast<float>(x)); }

Conv2D random_conv(std::mt19937_64& rng, int in_c, int out_c, int k, int stride, int padding) {
  Conv2D c{out_c, in_c, k, k, stride, padding, {}, {}};
  const double bound = std::sqrt(3.0 / (in_c * k * k));
  std::uniform_real_distribution<double> w(-bound, bound);
  c.weights.resize(static_cast<std::size_t>(out_c) * in_c * k * k);
  for (auto& v : c.weights) v = f32(w(rng));
  std::uniform_real_distribution<double> b(-0.1, 0.1);
  c.bias.resize(static_cast<std::size_t>(out_c));
  for (auto& v : c.bias) v = f32(b(rng));
  return c;
}

Dense random_dense(std::mt19937_64& rng, int in, int units) {
  Dense d{units, in, {}, {}};
  const double bound = std::sqrt(3.0 / in);
  std::uniform_real_distribution<double> w(-bound, bound);
  d.weights.resize(static_cast<std::size_t>(units) * in);
  for (auto& v : d.weights) v = f32(w(rng));
  std::uniform_real_distribution<double> b(-0.1, 0.1);
  d.bias.resize(static_cast<std::size_t>(units));
  for (auto& v : d.bias) v = f32(b(rng));
  return d;
}

// Per-channel mean and population variance of one layer's output over a set of tensors.
std::pair<std::vector<double>, std::vector<double>> channel_stats(const Shape& s,
                                                                  const std::vector<std::vector<double>>& xs) {
  std::vector<double> mean(static_cast<std::size_t>(s.c), 0.0), var(static_cast<std::size_t>(s.c), 0.0);
  const double count = static_cast<double>(xs.size()) * s.h * s.w;
  for (const auto& x : xs) {
    for (std::size_t p = 0; p < x.size(); ++p) mean[p % s.c] += x[p];
  }
  for (auto& m : mean) m /= count;
  for (const auto& x : xs) {
    for (std::size_t p = 0; p < x.size(); ++p) {
      const double d = x[p] - mean[p % s.c];
      var[p % s.c] += d * d;
    }
  }
  for (auto& v : var) v /= count;
  return {mean, var};
}

}  // namespace

ModelGraph make_preset(const PresetOptions& options) {
  if (options.calibration_images < 1) throw Error(ErrorCode::invalid_argument, "calibration_images must be >= 1");
  std::mt19937_64 rng(options.seed);
  ModelGraph g;
  struct Block {
    int out_c, k, stride, padding;
    bool pool;
  };
  std::vector<Block> blocks;
  std::vector<int> dense_units;
  if (options.arch == Architecture::mnist) {
    g.input_shape = {28, 28, 1};
    blocks = {{5, 5, 2, 0, false}, {50, 5, 2, 0, false}};
    dense_units = {10};
  } else {
    g.input_shape = {32, 32, 3};
    blocks = {{32, 3, 1, 1, true}, {64, 3, 1, 1, true}, {128, 3, 1, 1, true}};
    dense_units = {256, 10};
  }

  std::uniform_real_distribution<double> pixel(0.0, 1.0);
  std::vector<std::vector<double>> acts(static_cast<std::size_t>(options.calibration_images));
  for (auto& img : acts) {
    img.resize(g.input_shape.size());
    for (auto& v : img) v = f32(pixel(rng));
  }

  std::normal_distribution<double> jitter(0.0, 0.1);
  Shape shape = g.input_shape;
  auto push = [&](Layer layer) {
    const Shape out = output_shape(layer, shape);
    for (auto& x : acts) x = forward_layer(layer, shape, x);
    g.layers.push_back(std::move(layer));
    shape = out;
  };

  for (const auto& b : blocks) {
    Conv2D conv = random_conv(rng, shape.c, b.out_c, b.k, b.stride, b.padding);
    if (options.batchnorm) {
      push(std::move(conv));
      auto [mean, var] = channel_stats(shape, acts);
      BatchNorm bn;
      for (int c = 0; c < shape.c; ++c) {
        bn.gamma.push_back(f32(1.0 + jitter(rng)));
        bn.beta.push_back(f32(jitter(rng)));
        bn.mean.push_back(f32(mean[static_cast<std::size_t>(c)]));
        bn.variance.push_back(f32(var[static_cast<std::size_t>(c)]));
      }
      push(std::move(bn));
    } else {
      // Without BatchNorm the filters themselves are normalized on the calibration set.
      const Shape before = shape;
      const auto saved = acts;
      push(conv);
      auto [mean, var] = channel_stats(shape, acts);
      for (int o = 0; o < conv.out_channels; ++o) {
        const double s = 1.0 / std::sqrt(var[static_cast<std::size_t>(o)] + 1e-3);
        for (int i = 0; i < conv.in_channels; ++i) {
          for (int y = 0; y < conv.kernel_h; ++y) {
            for (int x = 0; x < conv.kernel_w; ++x) conv.weight(o, i, y, x) = f32(conv.weight(o, i, y, x) * s);
          }
        }
        auto& bias = conv.bias[static_cast<std::size_t>(o)];
        bias = f32((bias - mean[static_cast<std::size_t>(o)]) * s);
      }
      g.layers.pop_back();
      shape = before;
      acts = saved;
      push(std::move(conv));
    }
    push(Activation{options.activation, 1.0});
    if (b.pool) push(AvgPool{2, 2, 2, false});
  }
  push(Flatten{});
  for (int units : dense_units) push(random_dense(rng, static_cast<int>(shape.size()), units));
  infer_shapes(g);
  return g;
}

}  // namespace hecnn::model
