// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <random>

#include "hecnn/error.hpp"
#include "hecnn/model.hpp"
#include "oracles.hpp"

using namespace hecnn;
using namespace hecnn::model;

namespace {

// Published degree-4 Swish fit on [-4, 4].
const polyfit::Polynomial kSwish4{{0.03347, 0.5, 0.19566, 0.0, -0.005075}};

std::vector<double> run(const ModelGraph& g, const std::vector<double>& x) { return plain_infer(g, x); }

}  // namespace

TEST_CASE("conv and batchnorm fusion") {
  std::mt19937_64 rng(1);
  const auto conv = oracle::random_conv(rng, 2, 4, 3, 1, 1);
  const auto bn = oracle::random_bn(rng, 4);
  const auto fused = fuse_conv_bn(conv, bn);
  const Shape in{6, 6, 2};
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const auto x = oracle::uniform_vector(rng, in.size(), -1.0, 1.0);
    auto seq = oracle::conv2d(conv, in, x);
    for (std::size_t i = 0; i < seq.size(); ++i) {
      const int c = static_cast<int>(i % 4);
      seq[i] = bn.gamma[c] * (seq[i] - bn.mean[c]) / std::sqrt(bn.variance[c] + bn.eps) + bn.beta[c];
    }
    worst = std::max(worst, oracle::max_abs_diff(forward_layer(fused, in, x), seq));
  }
  CHECK(worst < 1e-6);
  CHECK_THROWS_AS(fuse_conv_bn(conv, oracle::random_bn(rng, 3)), Error);

  const ModelGraph g{in, {conv, bn, Flatten{}}};
  const auto f = fuse_batchnorm(g);
  CHECK(f.layers.size() == 2);
  CHECK(fuse_batchnorm(f) == f);
}

TEST_CASE("monic folding into a dense layer") {
  std::mt19937_64 rng(2);
  const auto dense = oracle::random_dense(rng, 8, 3);
  const auto [act, succ] = monic_fold(Activation{kSwish4, 1.0}, dense);
  CHECK(act.poly.is_monic());
  CHECK(act.pre_fold_scale == -0.005075);
  CHECK(act.poly.coeffs[2] == doctest::Approx(0.19566 / -0.005075));
  const ModelGraph before{{1, 1, 8}, {Activation{kSwish4, 1.0}, dense}};
  const ModelGraph after{{1, 1, 8}, {act, succ}};
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const auto x = oracle::uniform_vector(rng, 8, -4.0, 4.0);
    worst = std::max(worst, oracle::max_abs_diff(run(before, x), run(after, x)));
  }
  CHECK(worst < 1e-6);
  try {
    (void)monic_fold(Activation{kSwish4, 1.0}, Flatten{});
    FAIL("accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::not_foldable);
  }
}

TEST_CASE("monic folding looks through pooling and flatten") {
  std::mt19937_64 rng(3);
  const Shape in{4, 4, 2};
  ModelGraph g{in,
               {oracle::random_conv(rng, 2, 2, 1, 1, 0), Activation{kSwish4, 1.0}, AvgPool{2, 2, 2, false}, Flatten{},
                oracle::random_dense(rng, 8, 3)}};
  const auto f = fold_monic(g);
  CHECK(std::get<Activation>(f.layers[1]).poly.is_monic());
  for (int t = 0; t < 50; ++t) {
    const auto x = oracle::uniform_vector(rng, in.size(), -1.0, 1.0);
    CHECK(oracle::max_abs_diff(run(g, x), run(f, x)) < 1e-9);
  }
  const ModelGraph dangling{{1, 1, 2}, {oracle::random_dense(rng, 2, 2), Activation{kSwish4, 1.0}}};
  CHECK_THROWS_AS(fold_monic(dangling), Error);
  const ModelGraph already{{1, 1, 2}, {Activation{{{0.0, 0.0, 1.0}}, 1.0}, oracle::random_dense(rng, 2, 2)}};
  CHECK(fold_monic(already) == already);
}

TEST_CASE("average pool folding") {
  std::mt19937_64 rng(4);
  const Shape in{4, 4, 3};
  const ModelGraph g{in, {AvgPool{2, 2, 2, false}, Flatten{}, oracle::random_dense(rng, 12, 5)}};
  const auto f = fold_avgpool(g);
  CHECK(std::get<AvgPool>(f.layers[0]).folded);
  for (int t = 0; t < 100; ++t) {
    const auto x = oracle::uniform_vector(rng, in.size(), -1.0, 1.0);
    CHECK(oracle::max_abs_diff(run(g, x), run(f, x)) < 1e-6);
  }
  const ModelGraph tail{in, {AvgPool{2, 2, 2, false}}};
  CHECK_THROWS_AS(fold_avgpool(tail), Error);
  const ModelGraph into_conv{in, {AvgPool{2, 2, 2, false}, oracle::random_conv(rng, 3, 2, 2, 1, 0)}};
  const auto fc = fold_avgpool(into_conv);
  const auto x = oracle::uniform_vector(rng, in.size(), -1.0, 1.0);
  CHECK(oracle::max_abs_diff(run(into_conv, x), run(fc, x)) < 1e-9);
}

TEST_CASE("small-value clamping") {
  CHECK(clamp_value(0.0) == 1e-7);
  CHECK(clamp_value(5e-8) == 1e-7);
  CHECK(clamp_value(1e-7) == 1e-7);
  CHECK(clamp_value(-5e-8) == -1e-7);
  CHECK(clamp_value(-1e-7) == -1e-7);
  CHECK(clamp_value(0.25) == 0.25);
  CHECK(clamp_value(-3.0) == -3.0);
  ModelGraph g{{1, 1, 2}, {Dense{2, 2, {0.0, 1e-9, -1e-9, 0.5}, {0.0, -2.0}}}};
  const auto c = clamp_small_weights(g);
  const auto& d = std::get<Dense>(c.layers[0]);
  CHECK(d.weights == std::vector<double>{1e-7, 1e-7, -1e-7, 0.5});
  CHECK(d.bias == std::vector<double>{1e-7, -2.0});
}

TEST_CASE("full optimization preserves logits") {
  const auto p4 = polyfit::fit_polynomial({polyfit::ActivationKind::relu, 4, -6, 6});
  for (auto arch : {Architecture::mnist, Architecture::cifar}) {
    const auto g = make_preset({arch, p4, true, 9, 2});
    const auto o = optimize(g);
    for (const auto& layer : o.layers) {
      CHECK_FALSE(std::holds_alternative<BatchNorm>(layer));
      if (const auto* a = std::get_if<Activation>(&layer)) CHECK(a->poly.is_monic());
      if (const auto* p = std::get_if<AvgPool>(&layer)) CHECK(p->folded);
    }
    std::mt19937_64 rng(5);
    for (int t = 0; t < 3; ++t) {
      const auto x = oracle::uniform_vector(rng, g.input_shape.size(), 0.0, 1.0);
      const auto a = run(g, x), b = run(o, x);
      CHECK(oracle::max_abs_diff(a, b) < 1e-5);
      CHECK(argmax(a) == argmax(b));
    }
  }
}
