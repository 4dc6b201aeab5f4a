// SPDX-License-Identifier: Apache-2.0
#include <bit>
#include <cstring>
#include <json.hpp>

#include "hecnn/error.hpp"
#include "hecnn/model.hpp"

namespace hecnn::model {

using nlohmann::json;

namespace {

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string base64_encode(const std::vector<unsigned char>& bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  for (std::size_t i = 0; i < bytes.size(); i += 3) {
    const unsigned b0 = bytes[i];
    const unsigned b1 = i + 1 < bytes.size() ? bytes[i + 1] : 0;
    const unsigned b2 = i + 2 < bytes.size() ? bytes[i + 2] : 0;
    const unsigned triple = (b0 << 16) | (b1 << 8) | b2;
    out += kAlphabet[(triple >> 18) & 63];
    out += kAlphabet[(triple >> 12) & 63];
    out += i + 1 < bytes.size() ? kAlphabet[(triple >> 6) & 63] : '=';
    out += i + 2 < bytes.size() ? kAlphabet[triple & 63] : '=';
  }
  return out;
}

std::vector<unsigned char> base64_decode(std::string_view text) {
  auto value = [](char ch) -> int {
    if (ch >= 'A' && ch <= 'Z') return ch - 'A';
    if (ch >= 'a' && ch <= 'z') return ch - 'a' + 26;
    if (ch >= '0' && ch <= '9') return ch - '0' + 52;
    if (ch == '+') return 62;
    if (ch == '/') return 63;
    return -1;
  };
  if (text.size() % 4 != 0) throw Error(ErrorCode::malformed_payload, "base64 length is not a multiple of 4");
  std::vector<unsigned char> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    int v[4];
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char ch = text[i + k];
      if (ch == '=' && i + 4 == text.size() && k >= 2) {
        v[k] = 0;
        ++pad;
      } else {
        v[k] = value(ch);
        if (v[k] < 0 || pad > 0) throw Error(ErrorCode::malformed_payload, "invalid base64 character");
      }
    }
    const unsigned triple = (static_cast<unsigned>(v[0]) << 18) | (static_cast<unsigned>(v[1]) << 12) |
                            (static_cast<unsigned>(v[2]) << 6) | static_cast<unsigned>(v[3]);
    out.push_back(static_cast<unsigned char>(triple >> 16));
    if (pad < 2) out.push_back(static_cast<unsigned char>((triple >> 8) & 0xff));
    if (pad < 1) out.push_back(static_cast<unsigned char>(triple & 0xff));
  }
  return out;
}

json tensor_to_json(const std::vector<double>& data, std::vector<int> shape) {
  std::vector<unsigned char> bytes(data.size() * 4);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(data[i]));
    for (int b = 0; b < 4; ++b) bytes[i * 4 + b] = static_cast<unsigned char>((bits >> (8 * b)) & 0xff);
  }
  return json{{"shape", shape}, {"data", base64_encode(bytes)}};
}

std::vector<double> tensor_from_json(const json& layer, const std::string& name, std::vector<int> expected_shape) {
  if (!layer.contains("tensors") || !layer["tensors"].contains(name)) {
    throw Error(ErrorCode::malformed_payload, "missing tensor '" + name + "'");
  }
  const json& t = layer["tensors"][name];
  const auto shape = t.at("shape").get<std::vector<int>>();
  if (shape != expected_shape) throw Error(ErrorCode::shape_mismatch, "tensor '" + name + "' has unexpected shape");
  std::size_t count = 1;
  for (int d : shape) count *= static_cast<std::size_t>(d);
  const auto bytes = base64_decode(t.at("data").get<std::string>());
  if (bytes.size() != count * 4) {
    throw Error(ErrorCode::malformed_payload, "tensor '" + name + "' payload has " + std::to_string(bytes.size()) +
                                                  " bytes, expected " + std::to_string(count * 4));
  }
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(bytes[i * 4 + b]) << (8 * b);
    out[i] = static_cast<double>(std::bit_cast<float>(bits));
  }
  return out;
}

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

json layer_to_json(const Layer& layer) {
  return std::visit(
      overloaded{
          [](const Conv2D& c) {
            return json{{"type", "conv2d"},
                        {"out_channels", c.out_channels},
                        {"in_channels", c.in_channels},
                        {"kernel", {c.kernel_h, c.kernel_w}},
                        {"stride", c.stride},
                        {"padding", c.padding},
                        {"tensors",
                         {{"weight", tensor_to_json(c.weights, {c.out_channels, c.in_channels, c.kernel_h, c.kernel_w})},
                          {"bias", tensor_to_json(c.bias, {c.out_channels})}}}};
          },
          [](const BatchNorm& bn) {
            const int n = bn.channels();
            return json{{"type", "batchnorm"},
                        {"eps", bn.eps},
                        {"tensors",
                         {{"gamma", tensor_to_json(bn.gamma, {n})},
                          {"beta", tensor_to_json(bn.beta, {n})},
                          {"mean", tensor_to_json(bn.mean, {n})},
                          {"variance", tensor_to_json(bn.variance, {n})}}}};
          },
          [](const Activation& a) {
            return json{{"type", "activation"}, {"coeffs", a.poly.coeffs}, {"pre_fold_scale", a.pre_fold_scale}};
          },
          [](const AvgPool& p) {
            return json{{"type", "avgpool"}, {"pool", {p.pool_h, p.pool_w}}, {"stride", p.stride}, {"folded", p.folded}};
          },
          [](const Flatten&) { return json{{"type", "flatten"}}; },
          [](const Dense& d) {
            return json{{"type", "dense"},
                        {"units", d.units},
                        {"in_features", d.in_features},
                        {"tensors",
                         {{"weight", tensor_to_json(d.weights, {d.units, d.in_features})},
                          {"bias", tensor_to_json(d.bias, {d.units})}}}};
          },
      },
      layer);
}

Layer layer_from_json(const json& j) {
  const auto type = j.at("type").get<std::string>();
  if (type == "conv2d") {
    Conv2D c;
    c.out_channels = j.at("out_channels").get<int>();
    c.in_channels = j.at("in_channels").get<int>();
    const auto k = j.at("kernel").get<std::vector<int>>();
    if (k.size() != 2) throw Error(ErrorCode::malformed_payload, "kernel must be [h, w]");
    c.kernel_h = k[0];
    c.kernel_w = k[1];
    c.stride = j.value("stride", 1);
    c.padding = j.value("padding", 0);
    c.weights = tensor_from_json(j, "weight", {c.out_channels, c.in_channels, c.kernel_h, c.kernel_w});
    c.bias = tensor_from_json(j, "bias", {c.out_channels});
    return c;
  }
  if (type == "batchnorm") {
    BatchNorm bn;
    bn.eps = j.value("eps", 1e-3);
    const int n = j.at("tensors").at("gamma").at("shape").at(0).get<int>();
    bn.gamma = tensor_from_json(j, "gamma", {n});
    bn.beta = tensor_from_json(j, "beta", {n});
    bn.mean = tensor_from_json(j, "mean", {n});
    bn.variance = tensor_from_json(j, "variance", {n});
    return bn;
  }
  if (type == "activation") {
    Activation a;
    a.poly.coeffs = j.at("coeffs").get<std::vector<double>>();
    a.pre_fold_scale = j.value("pre_fold_scale", 1.0);
    return a;
  }
  if (type == "avgpool") {
    AvgPool p;
    const auto pool = j.at("pool").get<std::vector<int>>();
    if (pool.size() != 2) throw Error(ErrorCode::malformed_payload, "pool must be [h, w]");
    p.pool_h = pool[0];
    p.pool_w = pool[1];
    p.stride = j.value("stride", p.pool_h);
    p.folded = j.value("folded", false);
    return p;
  }
  if (type == "flatten") return Flatten{};
  if (type == "dense") {
    Dense d;
    d.units = j.at("units").get<int>();
    d.in_features = j.at("in_features").get<int>();
    d.weights = tensor_from_json(j, "weight", {d.units, d.in_features});
    d.bias = tensor_from_json(j, "bias", {d.units});
    return d;
  }
  throw Error(ErrorCode::unknown_layer, "unknown layer type '" + type + "'");
}

}  // namespace

std::string save_model(const ModelGraph& g) {
  json layers = json::array();
  for (const auto& layer : g.layers) layers.push_back(layer_to_json(layer));
  json doc{{"format_version", kModelFormatVersion},
           {"input_shape", {g.input_shape.h, g.input_shape.w, g.input_shape.c}},
           {"layers", std::move(layers)}};
  return doc.dump(1);
}

ModelGraph load_model(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::malformed_payload, e.what());
  }
  try {
    if (doc.value("format_version", 0) != kModelFormatVersion) {
      throw Error(ErrorCode::bad_format, "unsupported model format version");
    }
    const auto in = doc.at("input_shape").get<std::vector<int>>();
    if (in.size() != 3) throw Error(ErrorCode::malformed_payload, "input_shape must be [h, w, c]");
    ModelGraph g{{in[0], in[1], in[2]}, {}};
    for (const auto& layer : doc.at("layers")) g.layers.push_back(layer_from_json(layer));
    infer_shapes(g);
    return g;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::malformed_payload, e.what());
  }
}

ModelGraph canonicalize(const ModelGraph& g) {
  ModelGraph out = g;
  auto round_all = [](std::vector<double>& v) {
    for (auto& x : v) x = static_cast<double>(static_cast<float>(x));
  };
  for (auto& layer : out.layers) {
    std::visit(overloaded{
                   [&](Conv2D& c) {
                     round_all(c.weights);
                     round_all(c.bias);
                   },
                   [&](BatchNorm& bn) {
                     round_all(bn.gamma);
                     round_all(bn.beta);
                     round_all(bn.mean);
                     round_all(bn.variance);
                   },
                   [&](Dense& d) {
                     round_all(d.weights);
                     round_all(d.bias);
                   },
                   [](auto&) {},
               },
               layer);
  }
  return out;
}

std::string plan_to_json(const LevelPlan& plan) {
  json layers = json::array();
  for (const auto& l : plan.per_layer) layers.push_back({{"layer", l.layer}, {"type", l.type}, {"levels", l.levels}});
  return json{{"per_layer", std::move(layers)}, {"total", plan.total}}.dump(1);
}

LevelPlan plan_from_json(std::string_view json_text) {
  try {
    const json doc = json::parse(json_text);
    LevelPlan plan;
    for (const auto& l : doc.at("per_layer")) {
      plan.per_layer.push_back({l.at("layer").get<std::size_t>(), l.at("type").get<std::string>(), l.at("levels").get<int>()});
    }
    plan.total = doc.at("total").get<int>();
    return plan;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::malformed_payload, e.what());
  }
}

}  // namespace hecnn::model
