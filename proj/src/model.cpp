// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <bit>
#include <cmath>

#include "hecnn/backend.hpp"
#include "hecnn/error.hpp"
#include "hecnn/model.hpp"

namespace hecnn::model {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

bool schedulable_monic(const polyfit::Polynomial& p) {
  try {
    monic_poly_depth(p);
    return true;
  } catch (const Error&) {
    return false;
  }
}

}  // namespace

std::string to_string(const Shape& s) {
  return std::to_string(s.h) + "x" + std::to_string(s.w) + "x" + std::to_string(s.c);
}

std::string_view layer_type(const Layer& layer) noexcept {
  return std::visit(overloaded{
                        [](const Conv2D&) { return std::string_view("conv2d"); },
                        [](const BatchNorm&) { return std::string_view("batchnorm"); },
                        [](const Activation&) { return std::string_view("activation"); },
                        [](const AvgPool&) { return std::string_view("avgpool"); },
                        [](const Flatten&) { return std::string_view("flatten"); },
                        [](const Dense&) { return std::string_view("dense"); },
                    },
                    layer);
}

double BatchNorm::scale(int c) const {
  return gamma[static_cast<std::size_t>(c)] / std::sqrt(variance[static_cast<std::size_t>(c)] + eps);
}

double BatchNorm::shift(int c) const {
  const auto i = static_cast<std::size_t>(c);
  return beta[i] - gamma[i] * mean[i] / std::sqrt(variance[i] + eps);
}

Shape output_shape(const Layer& layer, const Shape& in) {
  auto fail = [&](const std::string& what) -> Shape {
    throw Error(ErrorCode::shape_mismatch, std::string(layer_type(layer)) + " on " + to_string(in) + ": " + what);
  };
  return std::visit(
      overloaded{
          [&](const Conv2D& c) -> Shape {
            if (c.in_channels != in.c) return fail("expects " + std::to_string(c.in_channels) + " input channels");
            if (c.kernel_h < 1 || c.kernel_w < 1 || c.stride < 1 || c.padding < 0 || c.out_channels < 1) {
              return fail("bad kernel geometry");
            }
            if (c.weights.size() != static_cast<std::size_t>(c.out_channels) * c.in_channels * c.kernel_h * c.kernel_w ||
                c.bias.size() != static_cast<std::size_t>(c.out_channels)) {
              return fail("weight tensor sizes do not match the declared geometry");
            }
            const int oh = (in.h + 2 * c.padding - c.kernel_h) / c.stride + 1;
            const int ow = (in.w + 2 * c.padding - c.kernel_w) / c.stride + 1;
            if (in.h + 2 * c.padding < c.kernel_h || in.w + 2 * c.padding < c.kernel_w) return fail("kernel too large");
            return {oh, ow, c.out_channels};
          },
          [&](const BatchNorm& bn) -> Shape {
            const auto n = static_cast<std::size_t>(in.c);
            if (bn.gamma.size() != n || bn.beta.size() != n || bn.mean.size() != n || bn.variance.size() != n) {
              return fail("channel count mismatch");
            }
            if (!(bn.eps > 0.0)) return fail("eps must be positive");
            for (double v : bn.variance) {
              if (v < 0.0) return fail("negative variance");
            }
            return in;
          },
          [&](const Activation& a) -> Shape {
            if (a.poly.coeffs.empty()) return fail("empty polynomial");
            return in;
          },
          [&](const AvgPool& p) -> Shape {
            if (p.pool_h < 1 || p.pool_w < 1 || p.stride < 1 || in.h < p.pool_h || in.w < p.pool_w) {
              return fail("bad pooling geometry");
            }
            return {(in.h - p.pool_h) / p.stride + 1, (in.w - p.pool_w) / p.stride + 1, in.c};
          },
          [&](const Flatten&) -> Shape { return {1, 1, static_cast<int>(in.size())}; },
          [&](const Dense& d) -> Shape {
            if (static_cast<std::size_t>(d.in_features) != in.size()) {
              return fail("expects " + std::to_string(d.in_features) + " inputs");
            }
            if (d.units < 1 || d.weights.size() != static_cast<std::size_t>(d.units) * d.in_features ||
                d.bias.size() != static_cast<std::size_t>(d.units)) {
              return fail("weight tensor sizes do not match the declared geometry");
            }
            return {1, 1, d.units};
          },
      },
      layer);
}

std::vector<Shape> infer_shapes(const ModelGraph& g) {
  if (g.layers.empty()) throw Error(ErrorCode::shape_mismatch, "model has no layers");
  if (g.input_shape.h < 1 || g.input_shape.w < 1 || g.input_shape.c < 1) {
    throw Error(ErrorCode::shape_mismatch, "invalid input shape " + to_string(g.input_shape));
  }
  std::vector<Shape> shapes{g.input_shape};
  for (const auto& layer : g.layers) shapes.push_back(output_shape(layer, shapes.back()));
  return shapes;
}

double batchnorm_infer(const BatchNorm& bn, int channel, double x) { return bn.scale(channel) * x + bn.shift(channel); }

std::vector<double> forward_layer(const Layer& layer, const Shape& in, std::span<const double> x) {
  if (x.size() != in.size()) throw Error(ErrorCode::shape_mismatch, "input tensor size does not match its shape");
  const Shape out_shape = output_shape(layer, in);
  std::vector<double> out(out_shape.size());
  std::visit(overloaded{
                 [&](const Conv2D& c) {
                   for (int oy = 0; oy < out_shape.h; ++oy) {
                     for (int ox = 0; ox < out_shape.w; ++ox) {
                       for (int o = 0; o < c.out_channels; ++o) {
                         double acc = 0.0;
                         for (int ky = 0; ky < c.kernel_h; ++ky) {
                           const int iy = oy * c.stride + ky - c.padding;
                           if (iy < 0 || iy >= in.h) continue;
                           for (int kx = 0; kx < c.kernel_w; ++kx) {
                             const int ix = ox * c.stride + kx - c.padding;
                             if (ix < 0 || ix >= in.w) continue;
                             for (int i = 0; i < c.in_channels; ++i) {
                               acc = acc + x[in.index(iy, ix, i)] * c.weight(o, i, ky, kx);
                             }
                           }
                         }
                         out[out_shape.index(oy, ox, o)] = acc + c.bias[static_cast<std::size_t>(o)];
                       }
                     }
                   }
                 },
                 [&](const BatchNorm& bn) {
                   for (std::size_t i = 0; i < x.size(); ++i) {
                     out[i] = batchnorm_infer(bn, static_cast<int>(i % static_cast<std::size_t>(in.c)), x[i]);
                   }
                 },
                 [&](const Activation& a) {
                   const bool scheduled = schedulable_monic(a.poly);
                   for (std::size_t i = 0; i < x.size(); ++i) {
                     out[i] = scheduled ? eval_poly_monic_plain(x[i], a.poly) : polyfit::eval_poly(a.poly, x[i]);
                   }
                 },
                 [&](const AvgPool& p) {
                   for (int oy = 0; oy < out_shape.h; ++oy) {
                     for (int ox = 0; ox < out_shape.w; ++ox) {
                       for (int k = 0; k < in.c; ++k) {
                         double acc = 0.0;
                         bool first = true;
                         for (int dy = 0; dy < p.pool_h; ++dy) {
                           for (int dx = 0; dx < p.pool_w; ++dx) {
                             const double v = x[in.index(oy * p.stride + dy, ox * p.stride + dx, k)];
                             acc = first ? v : acc + v;
                             first = false;
                           }
                         }
                         out[out_shape.index(oy, ox, k)] = p.folded ? acc : acc / p.area();
                       }
                     }
                   }
                 },
                 [&](const Flatten&) { std::copy(x.begin(), x.end(), out.begin()); },
                 [&](const Dense& d) {
                   for (int o = 0; o < d.units; ++o) {
                     double acc = 0.0;
                     for (int i = 0; i < d.in_features; ++i) acc = acc + x[static_cast<std::size_t>(i)] * d.weight(o, i);
                     out[static_cast<std::size_t>(o)] = acc + d.bias[static_cast<std::size_t>(o)];
                   }
                 },
             },
             layer);
  return out;
}

std::vector<double> plain_infer(const ModelGraph& g, std::span<const double> image) {
  const auto shapes = infer_shapes(g);
  if (image.size() != g.input_shape.size()) {
    throw Error(ErrorCode::shape_mismatch, "image has " + std::to_string(image.size()) + " values, model expects " +
                                               to_string(g.input_shape));
  }
  std::vector<double> x(image.begin(), image.end());
  for (std::size_t i = 0; i < g.layers.size(); ++i) x = forward_layer(g.layers[i], shapes[i], x);
  return x;
}

std::vector<std::vector<double>> plain_infer_batch(const ModelGraph& g, std::span<const double> images,
                                                   std::size_t count) {
  const std::size_t per = g.input_shape.size();
  if (images.size() != per * count) throw Error(ErrorCode::shape_mismatch, "batch size does not match image count");
  std::vector<std::vector<double>> out;
  out.reserve(count);
  for (std::size_t b = 0; b < count; ++b) out.push_back(plain_infer(g, images.subspan(b * per, per)));
  return out;
}

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::distance(v.begin(), std::max_element(v.begin(), v.end())));
}

int activation_levels(const Activation& act) {
  const int d = act.poly.degree();
  if (d <= 0) return 0;
  const int base = d == 1 ? 0 : std::bit_width(static_cast<unsigned>(d - 1));
  return base + (act.poly.leading() == 1.0 ? 0 : 1);
}

LevelPlan plan_levels(const ModelGraph& g, PlanOptions options) {
  infer_shapes(g);
  LevelPlan plan;
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    const Layer& layer = g.layers[i];
    int levels = 0;
    std::visit(overloaded{
                   [&](const Conv2D&) { levels = 1; },
                   [&](const Dense&) { levels = 1; },
                   [&](const Flatten&) { levels = 0; },
                   [&](const Activation& a) { levels = activation_levels(a); },
                   [&](const BatchNorm&) {
                     if (!options.allow_unoptimized) {
                       throw Error(ErrorCode::unfused_batchnorm, "layer " + std::to_string(i) + " must be fused first");
                     }
                     levels = 1;
                   },
                   [&](const AvgPool& p) {
                     if (p.folded || p.area() == 1) {
                       levels = 0;
                     } else if (!options.allow_unoptimized) {
                       throw Error(ErrorCode::unfolded_pool, "layer " + std::to_string(i) + " must be folded first");
                     } else {
                       levels = 1;
                     }
                   },
               },
               layer);
    plan.per_layer.push_back({i, std::string(layer_type(layer)), levels});
    plan.total += levels;
  }
  return plan;
}

}  // namespace hecnn::model
