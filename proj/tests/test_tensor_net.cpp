#include <random>

#include "doctest.h"
#include "fedtiny/engine.hpp"
#include "fedtiny/error.hpp"
#include "fedtiny/network.hpp"
#include "fedtiny/rng.hpp"
#include "oracles.hpp"

using namespace fedtiny;

namespace {

Tensor mat(std::size_t r, std::size_t c, std::vector<double> v) { return Tensor({r, c}, std::move(v)); }

Network bn_only(double momentum, double eps) {
  LinearLayer lin{mat(1, 1, {1.0}), Tensor({1}, std::vector<double>{0.0}), false};
  return Network({lin, BatchNormLayer{BNState::identity(1, momentum, eps)}}, 1);
}

Tensor random_batch(std::size_t n, std::size_t dim, Rng& rng) {
  std::normal_distribution<double> N(0.0, 1.0);
  std::vector<double> v(n * dim);
  for (auto& x : v) x = N(rng);
  return Tensor({n, dim}, std::move(v));
}

}  // namespace

TEST_CASE("tensor shape invariants") {
  CHECK_THROWS_AS(Tensor({2, 3}, std::vector<double>(5)), Error);
  CHECK_THROWS_AS(Tensor({0, 3}, 0.0), Error);
  Tensor t({2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t.all_finite());
  t[4] = std::numeric_limits<double>::infinity();
  CHECK_FALSE(t.all_finite());
}

TEST_CASE("identity batch norm in eval mode passes input through") {
  Network net = bn_only(0.9, 1e-300);
  const auto x = mat(3, 1, {-2.0, 0.5, 7.0});
  const auto y = infer(net, x);
  for (std::size_t i = 0; i < 3; ++i) CHECK(y[i] == doctest::Approx(x[i]).epsilon(1e-15));
}

TEST_CASE("train-mode batch norm updates moving statistics") {
  Network net = bn_only(0.9, 1e-5);
  forward(net, mat(2, 1, {2.0, 4.0}), Mode::kTrain);
  const auto& s = net.bn(1);
  CHECK(s.mean[0] == doctest::Approx(0.3).epsilon(1e-15));
  // biased batch variance is 1: 0.9 * 1 + 0.1 * 1
  CHECK(s.var[0] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("eval forward leaves the network bit-identical") {
  Rng rng(3);
  Network net = Network::mlp({{5, 8, 8, 3}, true, 0.9, 1e-5, 5}, 11);
  forward(net, random_batch(6, 5, rng), Mode::kTrain);
  const Network before = net;
  forward(net, random_batch(4, 5, rng), Mode::kEval);
  CHECK(net == before);
}

TEST_CASE("forward preconditions") {
  Rng rng(1);
  Network net = Network::mlp({{4, 6, 2}, true, 0.9, 1e-5, 5}, 2);
  CHECK_THROWS_AS(forward(net, random_batch(1, 4, rng), Mode::kTrain), Error);
  CHECK_THROWS_AS(forward(net, random_batch(3, 5, rng), Mode::kEval), Error);
  CHECK_NOTHROW(forward(net, random_batch(1, 4, rng), Mode::kEval));
}

TEST_CASE("first and last linear layers are never prunable") {
  Network net = Network::mlp({{4, 6, 6, 6, 2}, true, 0.9, 1e-5, 5}, 2);
  const auto lin = net.linear_layers();
  REQUIRE(lin.size() == 4);
  CHECK_FALSE(net.linear(lin.front()).prunable);
  CHECK_FALSE(net.linear(lin.back()).prunable);
  CHECK(net.prunable_layers() == std::vector<std::size_t>{lin[1], lin[2]});
  std::size_t covered = 0;
  for (const auto& b : net.blocks()) covered += b.size();
  CHECK(covered == net.size());
  CHECK(net.blocks().size() == 5);
}

TEST_CASE("backprop matches finite differences") {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    Rng rng(seed);
    const bool bn = seed % 2 == 0;
    Network net = Network::mlp({{3, 5, 4, 3}, bn, 0.9, 1e-5, 5}, seed + 100);
    // Move BN affine parameters off their identity defaults.
    for (auto i : net.bn_layers()) {
      std::uniform_real_distribution<double> U(0.5, 1.5);
      for (auto& v : net.bn(i).scale) v = U(rng);
      for (auto& v : net.bn(i).shift) v = U(rng) - 1.0;
    }
    const auto x = random_batch(5, 3, rng);
    const std::vector<int> y{0, 2, 1, 1, 0};
    CAPTURE(seed);
    CHECK(oracle::gradient_check(net, x, y) < 1e-4);
  }
}

TEST_CASE("squared error gradient") {
  const auto out = mat(2, 2, {1.0, 2.0, 3.0, 4.0});
  const auto target = mat(2, 2, {0.0, 2.0, 5.0, 4.0});
  const auto r = squared_error(out, target);
  CHECK(r.loss.value == doctest::Approx((0.5 * 1.0 + 0.5 * 4.0) / 2.0));
  CHECK(r.grad[0] == doctest::Approx(0.5));
  CHECK(r.grad[2] == doctest::Approx(-1.0));
}

TEST_CASE("backward errors") {
  Rng rng(5);
  Network net = Network::mlp({{4, 6, 3}, true, 0.9, 1e-5, 5}, 2);
  const auto x = random_batch(4, 4, rng);
  ForwardCache cache;
  const auto logits = forward(net, x, Mode::kTrain, &cache);
  CHECK_THROWS_AS(backward(net, logits, std::vector<int>{0, 1, 2, 3}, cache), Error);
  ForwardCache empty;
  CHECK_THROWS_AS(backward(net, logits, std::vector<int>{0, 1, 2, 0}, empty), Error);
}

TEST_CASE("restricted backward matches the full pass on requested layers") {
  Rng rng(9);
  Network net = Network::mlp({{4, 6, 6, 6, 3}, true, 0.9, 1e-5, 5}, 4);
  const auto x = random_batch(5, 4, rng);
  const std::vector<int> y{0, 1, 2, 0, 1};
  ForwardCache cache;
  const auto logits = forward(net, x, Mode::kTrain, &cache);
  const auto lg = softmax_cross_entropy(logits, y);
  const auto full = backward_from(net, cache, lg.grad);
  const auto targets = net.prunable_layers();
  const auto part = backward_from(net, cache, lg.grad, targets);
  for (auto l : targets) CHECK(part[l].weight == full[l].weight);
}

TEST_CASE("sgd_step respects the mask and the learning rate") {
  Rng rng(7);
  Network net = Network::mlp({{4, 8, 8, 3}, true, 0.9, 1e-5, 5}, 6);
  auto mask = Mask::ones(net);
  for (auto& lm : mask.layers())
    for (std::size_t j = 0; j < lm.bits.size(); j += 2) lm.bits[j] = 0;
  apply_mask(net, mask);
  const auto x = random_batch(6, 4, rng);
  const std::vector<int> y{0, 1, 2, 0, 1, 2};
  ForwardCache cache;
  const auto logits = forward(net, x, Mode::kTrain, &cache);
  const auto grads = backward(net, logits, y, cache).grads;

  Network same = net;
  sgd_step(same, grads, mask, 0.0);
  CHECK(same == net);
  CHECK_THROWS_AS(sgd_step(same, grads, mask, -0.1), Error);

  sgd_step(net, grads, mask, 0.1);
  for (const auto& lm : mask.layers()) {
    const auto w = net.linear(lm.layer).weight.values();
    for (std::size_t j = 0; j < w.size(); ++j)
      if (!lm.bits[j]) CHECK(w[j] == 0.0);
  }
}
