// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <random>

#include "hecnn/error.hpp"
#include "hecnn/model.hpp"
#include "oracles.hpp"

using namespace hecnn;
using namespace hecnn::model;

namespace {

const polyfit::Polynomial kSquare{{0.0, 0.0, 1.0}};

polyfit::Polynomial swish(int degree) { return polyfit::fit_polynomial({polyfit::ActivationKind::swish, degree, -4, 4}); }

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::invalid_argument;
}

}  // namespace

TEST_CASE("MNIST preset shapes") {
  const auto g = make_preset({Architecture::mnist, kSquare, true, 1, 8});
  REQUIRE(g.layers.size() == 8);
  const std::vector<std::string_view> types{"conv2d", "batchnorm", "activation", "conv2d",
                                            "batchnorm", "activation", "flatten", "dense"};
  for (std::size_t i = 0; i < types.size(); ++i) CHECK(layer_type(g.layers[i]) == types[i]);
  const auto shapes = infer_shapes(g);
  CHECK(shapes[0] == Shape{28, 28, 1});
  CHECK(shapes[1] == Shape{12, 12, 5});
  CHECK(shapes[4] == Shape{4, 4, 50});
  CHECK(shapes.back() == Shape{1, 1, 10});
  CHECK(std::get<Conv2D>(g.layers[0]).stride == 2);
  CHECK(std::get<Conv2D>(g.layers[3]).kernel_h == 5);
}

TEST_CASE("CIFAR preset shapes") {
  const auto g = make_preset({Architecture::cifar, kSquare, true, 1, 2});
  const auto shapes = infer_shapes(g);
  std::vector<Shape> after_pool;
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    if (std::holds_alternative<AvgPool>(g.layers[i])) after_pool.push_back(shapes[i + 1]);
  }
  CHECK(after_pool == std::vector<Shape>{{16, 16, 32}, {8, 8, 64}, {4, 4, 128}});
  CHECK(shapes[1] == Shape{32, 32, 32});
  CHECK(shapes[shapes.size() - 2] == Shape{1, 1, 256});
  CHECK(shapes.back() == Shape{1, 1, 10});
}

TEST_CASE("BatchNorm calibration normalizes activation inputs") {
  const auto g = make_preset({Architecture::mnist, kSquare, true, 3, 32});
  std::mt19937_64 rng(1);
  const auto shapes = infer_shapes(g);
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (int t = 0; t < 16; ++t) {
    auto x = oracle::uniform_vector(rng, 784, 0.0, 1.0);
    for (std::size_t l = 0; l < 2; ++l) x = forward_layer(g.layers[l], shapes[l], x);
    for (double v : x) {
      sum += v;
      sq += v * v;
      ++n;
    }
  }
  const double mean = sum / n, var = sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.3);
  CHECK(var > 0.5);
  CHECK(var < 2.0);
}

TEST_CASE("plain inference basics") {
  auto g = make_preset({Architecture::mnist, kSquare, false, 1, 4});
  for (auto& layer : g.layers) {
    if (auto* c = std::get_if<Conv2D>(&layer)) std::fill(c->weights.begin(), c->weights.end(), 0.0);
    if (auto* d = std::get_if<Dense>(&layer)) std::fill(d->weights.begin(), d->weights.end(), 0.0);
  }
  const auto logits = plain_infer(g, std::vector<double>(784, 0.0));
  CHECK(logits == std::get<Dense>(g.layers.back()).bias);
  CHECK(argmax(std::vector<double>{0.1, 3.0, -1.0, 3.0}) == 1);
  CHECK_THROWS_AS(plain_infer(g, std::vector<double>(10, 0.0)), Error);
}

TEST_CASE("convolution matches direct formula") {
  std::mt19937_64 rng(2);
  for (auto [k, stride, pad] : {std::tuple{3, 1, 1}, std::tuple{5, 2, 0}, std::tuple{1, 1, 0}, std::tuple{3, 2, 2}}) {
    const Shape in{9, 7, 3};
    const auto conv = oracle::random_conv(rng, 3, 4, k, stride, pad);
    const auto x = oracle::uniform_vector(rng, in.size(), -1.0, 1.0);
    const auto got = forward_layer(conv, in, x);
    const auto want = oracle::conv2d(conv, in, x);
    REQUIRE(got.size() == want.size());
    CHECK(oracle::max_abs_diff(got, want) < 1e-12);
  }
}

TEST_CASE("pooling and dense layers") {
  const Shape in{4, 4, 1};
  std::vector<double> x(16);
  for (int i = 0; i < 16; ++i) x[static_cast<std::size_t>(i)] = i;
  const auto avg = forward_layer(AvgPool{2, 2, 2, false}, in, x);
  CHECK(avg == std::vector<double>{2.5, 4.5, 10.5, 12.5});
  const auto sum = forward_layer(AvgPool{2, 2, 2, true}, in, x);
  CHECK(sum == std::vector<double>{10.0, 18.0, 42.0, 50.0});
  const Dense d{2, 3, {1, 0, 0, 0, 2, 1}, {0.5, -1.0}};
  CHECK(forward_layer(d, {1, 1, 3}, std::vector<double>{1, 2, 3}) == std::vector<double>{1.5, 6.0});
  CHECK_THROWS_AS(output_shape(d, {1, 1, 4}), Error);
}

TEST_CASE("level plans for the shipped presets") {
  const std::vector<std::pair<polyfit::Polynomial, int>> mnist{{kSquare, 5}, {swish(2), 5}, {swish(4), 7}};
  const std::vector<std::pair<polyfit::Polynomial, int>> cifar{{kSquare, 8}, {swish(2), 8}, {swish(4), 11}};
  for (const auto& [poly, levels] : mnist) {
    CHECK(plan_levels(optimize(make_preset({Architecture::mnist, poly, true, 1, 4}))).total == levels);
  }
  for (const auto& [poly, levels] : cifar) {
    CHECK(plan_levels(optimize(make_preset({Architecture::cifar, poly, true, 1, 1}))).total == levels);
  }
  const auto plan = plan_levels(optimize(make_preset({Architecture::mnist, swish(4), true, 1, 4})));
  REQUIRE(plan.per_layer.size() == 6);
  CHECK(plan.per_layer[0].levels == 1);
  CHECK(plan.per_layer[1].levels == 2);
  CHECK(plan.per_layer[4].levels == 0);
  CHECK(plan.per_layer[5].type == "dense");
}

TEST_CASE("planner refuses unoptimized graphs") {
  const auto raw = make_preset({Architecture::cifar, kSquare, true, 1, 1});
  CHECK(code_of([&] { (void)plan_levels(raw); }) == ErrorCode::unfused_batchnorm);
  const auto fused = fuse_batchnorm(raw);
  CHECK(code_of([&] { (void)plan_levels(fused); }) == ErrorCode::unfolded_pool);
  CHECK(plan_levels(raw, {true}).total > 8);
  CHECK(plan_levels(fused, {true}).total == 11);
  // A non-monic degree-4 activation costs one extra level.
  CHECK(activation_levels(Activation{swish(4), 1.0}) == 3);
  CHECK(activation_levels(Activation{{{0.0, 0.0, 0.0, 0.0, 1.0}}, 1.0}) == 2);
}

TEST_CASE("model JSON roundtrip") {
  const auto g = canonicalize(make_preset({Architecture::cifar, swish(4), true, 5, 1}));
  const auto text = save_model(g);
  CHECK(load_model(text) == g);
  const auto o = canonicalize(optimize(g));
  CHECK(load_model(save_model(o)) == o);
  const auto plan = plan_levels(o);
  const auto back = plan_from_json(plan_to_json(plan));
  CHECK(back.total == plan.total);
  CHECK(back.per_layer.size() == plan.per_layer.size());
}

TEST_CASE("malformed model files") {
  const std::string empty = R"({"format_version":1,"input_shape":[2,2,1],"layers":[]})";
  CHECK(code_of([&] { (void)load_model(empty); }) == ErrorCode::shape_mismatch);
  const std::string unknown = R"({"format_version":1,"input_shape":[2,2,1],"layers":[{"type":"maxpool"}]})";
  CHECK(code_of([&] { (void)load_model(unknown); }) == ErrorCode::unknown_layer);
  const std::string bad_payload =
      R"({"format_version":1,"input_shape":[1,1,2],"layers":[{"type":"dense","units":1,"in_features":2,)"
      R"("tensors":{"weight":{"shape":[1,2],"data":"AAAAAA=="},"bias":{"shape":[1],"data":"AAAAAA=="}}}]})";
  CHECK(code_of([&] { (void)load_model(bad_payload); }) == ErrorCode::malformed_payload);
  CHECK(code_of([&] { (void)load_model("{not json"); }) == ErrorCode::malformed_payload);
  const std::string version = R"({"format_version":9,"input_shape":[1,1,1],"layers":[{"type":"flatten"}]})";
  CHECK(code_of([&] { (void)load_model(version); }) == ErrorCode::bad_format);
  const std::string ok =
      R"({"format_version":1,"input_shape":[1,1,2],"layers":[{"type":"dense","units":1,"in_features":2,)"
      R"("tensors":{"weight":{"shape":[1,2],"data":"AACAPwAAAEA="},"bias":{"shape":[1],"data":"AAAAAA=="}}}]})";
  const auto g = load_model(ok);
  CHECK(std::get<Dense>(g.layers[0]).weights == std::vector<double>{1.0, 2.0});
}
