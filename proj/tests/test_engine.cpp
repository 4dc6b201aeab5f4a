// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <random>

#include "hecnn/ckks/context.hpp"
#include "hecnn/engine.hpp"
#include "hecnn/error.hpp"
#include "oracles.hpp"

using namespace hecnn;
using namespace hecnn::model;
using hecnn::engine::PackedTensor;

namespace {

const ckks::CkksParams& params() {
  static const auto p = ckks::preset("mnist-deg4", ckks::SecurityProfile::test_insecure);
  return p;
}

CkksBackend& ckks_backend() {
  static const auto ctx = ckks::CkksContext::create(params());
  static const auto keys = std::make_shared<const ckks::KeySet>(ckks::keygen(*ctx, 31));
  static CkksBackend backend(ctx, keys, 37);
  return backend;
}

const polyfit::Polynomial kSwish4 =
    polyfit::fit_polynomial({polyfit::ActivationKind::swish, 4, -4, 4});

// Small network with every layer kind, already optimized.
ModelGraph small_net(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ModelGraph g{{6, 6, 2},
               {oracle::random_conv(rng, 2, 3, 3, 1, 1), oracle::random_bn(rng, 3), Activation{kSwish4, 1.0},
                AvgPool{2, 2, 2, false}, oracle::random_conv(rng, 3, 4, 2, 1, 0), Activation{{{0.0, 0.0, 1.0}}, 1.0},
                Flatten{}, oracle::random_dense(rng, 16, 5)}};
  return optimize(g);
}

}  // namespace

TEST_CASE("packing layout") {
  SimBackend sim(params());
  const std::vector<double> img{1.0, 2.0, 3.0, 4.0};
  const auto t = engine::pack_encrypt(sim, img, 1, {2, 2, 1});
  CHECK(t.cells.size() == 4);
  CHECK(sim.decrypt(t.at(1, 0, 0))[0] == 3.0);
  CHECK(sim.decrypt(t.at(1, 0, 0))[1] == 0.0);

  std::mt19937_64 rng(1);
  const Shape s{3, 3, 2};
  const auto batch = oracle::uniform_vector(rng, 5 * s.size(), 0.0, 1.0);
  const auto packed = engine::pack_encrypt(ckks_backend(), batch, 5, s, 2);
  const auto back = engine::unpack_decrypt(ckks_backend(), packed, 2);
  REQUIRE(back.size() == 5);
  for (std::size_t b = 0; b < 5; ++b) {
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(std::abs(back[b][i] - batch[b * s.size() + i]) < 1e-4);
  }
  CHECK_THROWS_AS(engine::pack_encrypt(sim, std::vector<double>(sim.slot_count() + 1, 0.0), sim.slot_count() + 1,
                                       {1, 1, 1}),
                  Error);
}

TEST_CASE("layer runners") {
  SimBackend sim(params());
  const Shape s{2, 2, 1};
  const auto t = engine::pack_encrypt(sim, std::vector<double>{1.5, 1.5, 1.5, 1.5}, 1, s);

  const Conv2D identity{1, 1, 1, 1, 1, 0, {1.0}, {0.0}};
  const auto c = engine::run_conv(sim, t, identity);
  CHECK(c.level() == t.level() - 1);
  CHECK(sim.decrypt(c.at(0, 1, 0))[0] == 1.5);

  const auto p = engine::run_pool_sum(sim, t, AvgPool{2, 2, 2, true});
  CHECK(p.level() == t.level());
  CHECK(sim.decrypt(p.at(0, 0, 0))[0] == 6.0);
  try {
    (void)engine::run_pool_sum(sim, t, AvgPool{2, 2, 2, false});
    FAIL("accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::unfolded_pool);
  }

  const auto f = engine::run_flatten(t);
  CHECK(f.shape == Shape{1, 1, 4});
  Dense eye{4, 4, std::vector<double>(16, 0.0), std::vector<double>(4, 0.0)};
  for (int i = 0; i < 4; ++i) eye.weight(i, i) = 1.0;
  const auto d = engine::run_dense(sim, f, eye);
  CHECK(d.level() == t.level() - 1);
  CHECK(sim.decrypt(d.cells[3])[0] == 1.5);

  const auto sq = engine::run_activation(sim, t, Activation{{{0.0, 0.0, 1.0}}, 1.0});
  CHECK(sq.level() == t.level() - 1);
  CHECK(sim.decrypt(sq.cells[0])[0] == 2.25);
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(engine::run_layer(sim, t, oracle::random_bn(rng, 1)), Error);
}

TEST_CASE("MNIST conv1 geometry") {
  SimBackend sim(params());
  std::mt19937_64 rng(2);
  const auto g = make_preset({Architecture::mnist, {{0.0, 0.0, 1.0}}, false, 1, 2});
  const auto x = oracle::uniform_vector(rng, 784, 0.0, 1.0);
  const auto t = engine::pack_encrypt(sim, x, 1, {28, 28, 1});
  const auto out = engine::run_conv(sim, t, std::get<Conv2D>(g.layers[0]));
  CHECK(out.shape == Shape{12, 12, 5});
}

TEST_CASE("simulator equals plaintext inference exactly") {
  const auto g = small_net(3);
  SimBackend sim(params());
  std::mt19937_64 rng(4);
  const std::size_t batch = 20;
  const auto images = oracle::uniform_vector(rng, batch * g.input_shape.size(), -1.0, 1.0);
  const auto r = engine::infer_encrypted(sim, g, images, batch, {2});
  const auto plain = plain_infer_batch(g, images, batch);
  for (std::size_t b = 0; b < batch; ++b) {
    CHECK(r.logits[b] == plain[b]);
    CHECK(r.predictions[b] == argmax(plain[b]));
  }
  CHECK(r.plan_matches());
  CHECK(r.plan.total == 1 + 2 + 1 + 1 + 1);
  CHECK(r.start_level - r.final_level == r.plan.total);
  CHECK(sim.ledger().consumption() == r.plan.total);
  CHECK(r.peak_ciphertexts >= 72);
  CHECK(r.per_image_seconds == doctest::Approx(r.total_seconds / batch));
}

TEST_CASE("batch independence") {
  const auto g = small_net(5);
  SimBackend sim(params());
  std::mt19937_64 rng(6);
  const std::size_t per = g.input_shape.size();
  auto images = oracle::uniform_vector(rng, 4 * per, -1.0, 1.0);
  const auto full = engine::infer_encrypted(sim, g, images, 4);
  for (std::size_t i = per; i < images.size(); ++i) images[i] = 0.0;
  const auto alone = engine::infer_encrypted(sim, g, images, 4);
  CHECK(full.logits[0] == alone.logits[0]);
}

TEST_CASE("budget is checked before encryption") {
  const auto g = optimize(make_preset({Architecture::mnist, kSwish4, true, 1, 2}));
  SimBackend small(ckks::preset("mnist-baseline", ckks::SecurityProfile::test_insecure));
  try {
    (void)engine::infer_encrypted(small, g, std::vector<double>(784, 0.0), 1);
    FAIL("accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::budget_exceeded);
  }
  CHECK(small.ledger().size() == 0);
}

TEST_CASE("thread count does not change results") {
  const auto g = small_net(7);
  std::mt19937_64 rng(8);
  const auto images = oracle::uniform_vector(rng, 3 * g.input_shape.size(), -1.0, 1.0);
  SimBackend a(params()), b(params());
  const auto r1 = engine::infer_encrypted(a, g, images, 3, {1});
  const auto r4 = engine::infer_encrypted(b, g, images, 3, {4});
  CHECK(r1.logits == r4.logits);
  auto e1 = a.ledger().entries(), e4 = b.ledger().entries();
  auto key = [](const LedgerEntry& e) { return std::tie(e.op, e.before, e.after); };
  std::sort(e1.begin(), e1.end(), [&](auto& x, auto& y) { return key(x) < key(y); });
  std::sort(e4.begin(), e4.end(), [&](auto& x, auto& y) { return key(x) < key(y); });
  CHECK(e1 == e4);
}

TEST_CASE("ckks inference tracks plaintext") {
  const auto g = small_net(9);
  std::mt19937_64 rng(10);
  const std::size_t batch = 32;
  const auto images = oracle::uniform_vector(rng, batch * g.input_shape.size(), -1.0, 1.0);
  auto& ck = ckks_backend();
  ck.ledger().clear();
  const auto r = engine::infer_encrypted(ck, g, images, batch, {2});
  const auto plain = plain_infer_batch(g, images, batch);
  double worst = 0.0;
  for (std::size_t b = 0; b < batch; ++b) worst = std::max(worst, oracle::max_abs_diff(r.logits[b], plain[b]));
  CHECK(worst < 1e-2);
  CHECK(r.plan_matches());
}
