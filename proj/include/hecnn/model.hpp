// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "hecnn/polyfit.hpp"

namespace hecnn::model {

/// Height x width x channels; tensors are stored row-major in that order (HWC).
struct Shape {
  int h = 0, w = 0, c = 0;

  std::size_t size() const noexcept { return static_cast<std::size_t>(h) * w * c; }
  std::size_t index(int i, int j, int k) const noexcept { return (static_cast<std::size_t>(i) * w + j) * c + k; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& s);

/// Cross-correlation with zero padding. weights are [out][in][kh][kw].
struct Conv2D {
  int out_channels = 0, in_channels = 0;
  int kernel_h = 0, kernel_w = 0;
  int stride = 1, padding = 0;
  std::vector<double> weights;
  std::vector<double> bias;

  double& weight(int o, int i, int y, int x) {
    return weights[((static_cast<std::size_t>(o) * in_channels + i) * kernel_h + y) * kernel_w + x];
  }
  double weight(int o, int i, int y, int x) const {
    return weights[((static_cast<std::size_t>(o) * in_channels + i) * kernel_h + y) * kernel_w + x];
  }
  friend bool operator==(const Conv2D&, const Conv2D&) = default;
};

/// Inference-time batch normalization with population statistics.
struct BatchNorm {
  std::vector<double> gamma, beta, mean, variance;
  double eps = 1e-3;

  int channels() const noexcept { return static_cast<int>(gamma.size()); }
  /// gamma / sqrt(variance + eps)
  double scale(int c) const;
  /// beta - gamma * mean / sqrt(variance + eps)
  double shift(int c) const;
  friend bool operator==(const BatchNorm&, const BatchNorm&) = default;
};

/// Polynomial activation. pre_fold_scale records the leading coefficient divided out by
/// monic folding (1 when untouched).
struct Activation {
  polyfit::Polynomial poly;
  double pre_fold_scale = 1.0;
  friend bool operator==(const Activation&, const Activation&) = default;
};

/// Average pooling without padding. Once `folded`, the 1/area factor lives in the next
/// weight-bearing layer and the layer itself is a plain window sum.
struct AvgPool {
  int pool_h = 2, pool_w = 2, stride = 2;
  bool folded = false;

  int area() const noexcept { return pool_h * pool_w; }
  friend bool operator==(const AvgPool&, const AvgPool&) = default;
};

struct Flatten {
  friend bool operator==(const Flatten&, const Flatten&) = default;
};

/// weights are [units][in_features]; the input is the flattened HWC tensor.
struct Dense {
  int units = 0, in_features = 0;
  std::vector<double> weights;
  std::vector<double> bias;

  double& weight(int o, int i) { return weights[static_cast<std::size_t>(o) * in_features + i]; }
  double weight(int o, int i) const { return weights[static_cast<std::size_t>(o) * in_features + i]; }
  friend bool operator==(const Dense&, const Dense&) = default;
};

using Layer = std::variant<Conv2D, BatchNorm, Activation, AvgPool, Flatten, Dense>;

std::string_view layer_type(const Layer& layer) noexcept;

struct ModelGraph {
  Shape input_shape;
  std::vector<Layer> layers;
  friend bool operator==(const ModelGraph&, const ModelGraph&) = default;
};

/// Throws shape_mismatch when the layer cannot consume `in`.
Shape output_shape(const Layer& layer, const Shape& in);
/// Shapes before every layer plus the final output shape (layers.size() + 1 entries).
/// Validates the graph: non-empty, consistent shapes and parameter sizes.
std::vector<Shape> infer_shapes(const ModelGraph& g);

// Plaintext reference -----------------------------------------------------------

double batchnorm_infer(const BatchNorm& bn, int channel, double x);

/// Applies one layer to a single HWC tensor.
std::vector<double> forward_layer(const Layer& layer, const Shape& in, std::span<const double> x);

/// Exact floating-point forward pass of one image; returns the logits. Monic activations
/// use the same operation order as the encrypted schedule.
std::vector<double> plain_infer(const ModelGraph& g, std::span<const double> image);

/// images holds `count` HWC tensors back to back.
std::vector<std::vector<double>> plain_infer_batch(const ModelGraph& g, std::span<const double> images,
                                                   std::size_t count);

std::size_t argmax(std::span<const double> v);

// Optimizer passes ------------------------------------------------------------------

/// Conv weights times W_BN per output channel; bias becomes B_Conv * W_BN + B_BN.
Conv2D fuse_conv_bn(const Conv2D& conv, const BatchNorm& bn);
/// Fuses every Conv2D -> BatchNorm pair. Identity on graphs without such pairs.
ModelGraph fuse_batchnorm(const ModelGraph& g);

/// Divides the activation by its leading coefficient a and multiplies the successor's
/// weights by a (bias unchanged), so the composite is unchanged.
std::pair<Activation, Layer> monic_fold(const Activation& act, const Layer& successor);
/// Applies monic_fold to every activation of degree >= 2, looking through AvgPool and
/// Flatten for the next Conv2D or Dense.
ModelGraph fold_monic(const ModelGraph& g);

/// Replaces each unfolded AvgPool by a window sum and moves 1/area into the next
/// Conv2D or Dense (through Flatten).
ModelGraph fold_avgpool(const ModelGraph& g);

inline constexpr double kClampMagnitude = 1e-7;
/// [0, 1e-7] -> 1e-7 and (-1e-7, 0) -> -1e-7; everything else unchanged.
double clamp_value(double w) noexcept;
/// Clamps every Conv2D, Dense and BatchNorm parameter.
ModelGraph clamp_small_weights(const ModelGraph& g);

/// fuse_batchnorm -> fold_avgpool -> clamp_small_weights -> fold_monic.
ModelGraph optimize(const ModelGraph& g);

// Level planning --------------------------------------------------------------------

struct LayerPlan {
  std::size_t layer = 0;
  std::string type;
  int levels = 0;
};

struct LevelPlan {
  std::vector<LayerPlan> per_layer;
  int total = 0;
};

struct PlanOptions {
  /// Cost BatchNorm at 1 and unfolded AvgPool at 1 instead of refusing them.
  bool allow_unoptimized = false;
};

/// Levels consumed by an activation: ceil(log2(degree)) plus one when not monic.
int activation_levels(const Activation& act);

/// Conv2D = Dense = 1, activation per activation_levels, folded pool = Flatten = 0.
/// Throws unfused_batchnorm / unfolded_pool unless allowed by options.
LevelPlan plan_levels(const ModelGraph& g, PlanOptions options = {});

// Serialization ---------------------------------------------------------------------

inline constexpr int kModelFormatVersion = 1;

/// JSON envelope; tensors are base64 little-endian float32, row-major.
std::string save_model(const ModelGraph& g);
ModelGraph load_model(std::string_view json_text);

/// Rounds every tensor entry to float32, the precision of the file format.
ModelGraph canonicalize(const ModelGraph& g);

std::string plan_to_json(const LevelPlan& plan);
LevelPlan plan_from_json(std::string_view json_text);

// Presets ----------------------------------------------------------------------------

enum class Architecture { mnist, cifar };

struct PresetOptions {
  Architecture arch = Architecture::mnist;
  polyfit::Polynomial activation{{0.0, 0.0, 1.0}};
  bool batchnorm = true;
  std::uint64_t seed = 1;
  /// Random images used to set BatchNorm population statistics.
  int calibration_images = 64;
};

/// Random-weight network of the MNIST (28x28x1) or CIFAR-10 (32x32x3) architecture.
/// BatchNorm statistics are measured on random inputs so activation inputs are
/// normalized the way trained population statistics would leave them.
ModelGraph make_preset(const PresetOptions& options);

}  // namespace hecnn::model
