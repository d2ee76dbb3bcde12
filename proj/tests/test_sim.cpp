#include <cmath>
#include <random>

#include "doctest.h"
#include "fedtiny/engine.hpp"
#include "fedtiny/error.hpp"
#include "fedtiny/rng.hpp"
#include "fedtiny/simulator.hpp"
#include "oracles.hpp"

using namespace fedtiny;

namespace {

ExperimentConfig small_config(Algorithm algo = Algorithm::kFedTiny) {
  ExperimentConfig c;
  c.algorithm = algo;
  c.classes = 4;
  c.per_class = 80;
  c.dim = 6;
  c.spread = 0.5;
  c.clients = 4;
  c.alpha = 1.0;
  c.hidden = {24, 24, 24};
  c.rounds = 12;
  c.local_epochs = 1;
  c.batch_size = 16;
  c.pretrain_epochs = 2;
  c.density = 0.1;
  c.pool_size = 5;
  c.schedule.interval = 3;
  c.schedule.stop_round = 12;
  c.workers = 1;
  return c;
}

bool same_metrics(const RoundMetrics& a, const RoundMetrics& b) {
  return a.accuracy == b.accuracy && a.loss == b.loss && a.density == b.density &&
         a.peak_flops == b.peak_flops && a.memory_bytes == b.memory_bytes &&
         a.nnz_after == b.nnz_after && a.grown == b.grown;
}

}  // namespace

TEST_CASE("pretraining") {
  const auto data = make_blobs(3, 60, 4, 0.3, 1);
  Network net = Network::mlp({{4, 16, 16, 3}, true, 0.9, 1e-5, 5}, 3);
  const Network before = net;
  CHECK(pretrain_server(net, data, {0, 16, 0.05, 1}).epoch_losses.empty());
  CHECK(net == before);

  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Network n = Network::mlp({{4, 16, 16, 3}, true, 0.9, 1e-5, 5}, seed);
    const auto losses = pretrain_server(n, make_blobs(3, 60, 4, 0.3, seed), {6, 16, 0.02, seed})
                            .epoch_losses;
    REQUIRE(losses.size() == 6);
    CAPTURE(seed);
    for (std::size_t e = 1; e < losses.size(); ++e) CHECK(losses[e] <= losses[e - 1]);
  }
  Dataset empty_ish = data.slice(0, 1);
  CHECK_THROWS_AS(pretrain_server(net, empty_ish, {1, 16, 0.05, 1}), Error);

  auto cfg = small_config();
  cfg.server_fraction = 0.0;
  CHECK_THROWS_AS(setup_experiment(cfg), Error);
}

TEST_CASE("uniform model scores chance accuracy") {
  const auto data = make_blobs(5, 20, 3, 0.5, 2);
  Network net = Network::mlp({{3, 8, 5}, true, 0.9, 1e-5, 5}, 1);
  auto& last = net.linear(net.linear_layers().back());
  last.weight.fill(0.0);
  last.bias.fill(0.0);
  const auto ev = evaluate_global(net, data);
  CHECK(ev.accuracy == doctest::Approx(0.2));
  CHECK(ev.loss == doctest::Approx(std::log(5.0)));
}

TEST_CASE("model averaging matches a brute-force weighted mean") {
  Rng rng(3);
  std::vector<Network> models;
  for (std::uint64_t s = 0; s < 4; ++s) {
    Network n = Network::mlp({{3, 6, 6, 2}, true, 0.9, 1e-5, 5}, s);
    for (auto i : n.bn_layers())
      for (auto& v : n.bn(i).var) v = 0.5 + s;
    models.push_back(n);
  }
  const std::vector<double> w{3, 1, 7, 2};
  const auto avg = average_models(models, w, SigmaAggregation::kVariance);
  for (auto i : avg.linear_layers()) {
    std::vector<std::vector<double>> ws;
    for (const auto& m : models) ws.push_back(m.linear(i).weight.storage());
    const auto expect = oracle::weighted_mean(ws, w);
    for (std::size_t j = 0; j < expect.size(); ++j)
      CHECK(std::abs(avg.linear(i).weight[j] - expect[j]) < 1e-12);
  }
  for (auto i : avg.bn_layers()) CHECK(avg.bn(i).var[0] == doctest::Approx((3 * 0.5 + 1.5 + 7 * 2.5 + 2 * 3.5) / 13));
  const std::vector<double> one{1.0};
  CHECK(average_models(std::span(models).first(1), one) == models[0]);
}

TEST_CASE("client sampling") {
  const auto a = sample_clients(100, 0.1, 3, 7);
  CHECK(a.size() == 10);
  CHECK(std::is_sorted(a.begin(), a.end()));
  CHECK(sample_clients(100, 0.1, 3, 7) == a);
  CHECK_FALSE(sample_clients(100, 0.1, 4, 7) == a);
  CHECK(sample_clients(5, 0.01, 1, 1).size() == 1);
  CHECK(sample_clients(5, 1.0, 1, 1).size() == 5);
}

TEST_CASE("rounds: masks frozen between pruning rounds, density conserved on them") {
  auto cfg = small_config();
  auto st = setup_experiment(cfg);
  const auto budget = density_budget(cfg.density, st.mask.size());
  for (std::size_t r = 1; r <= cfg.rounds; ++r) {
    const Mask before = st.mask;
    const auto m = run_round(st, r);
    CHECK(m.nnz_after == m.nnz_before);
    CHECK(st.mask.nnz() <= budget);
    CHECK(m.topk_violations == 0);
    if (!is_pruning_round(r, cfg.schedule)) {
      CHECK(st.mask == before);
    } else if (m.grown > 0) {
      CHECK_FALSE(st.mask == before);
    }
    if (m.pruning_round) {
      const double fd = forward_flops(st.global, Mask{}, cfg.batch_size);
      CHECK(m.extra_flops <= fd);
    }
  }
}

TEST_CASE("a single client's round returns its own parameters") {
  auto cfg = small_config(Algorithm::kStaticMagnitude);
  cfg.clients = 1;
  auto st = setup_experiment(cfg);
  Network expect = st.global;
  train_local(expect, st.mask, st.clients[0],
              {cfg.local_epochs, cfg.batch_size, cfg.lr, derive_seed(cfg.seed, {9, 1, 0})});
  run_round(st, 1);
  CHECK(st.global == expect);
}

TEST_CASE("algorithm variants") {
  for (auto algo : {Algorithm::kStaticRandom, Algorithm::kStaticMagnitude,
                    Algorithm::kAdaptiveBNOnly}) {
    auto st = setup_experiment(small_config(algo));
    const Mask m0 = st.mask;
    for (std::size_t r = 1; r <= 6; ++r) run_round(st, r);
    CHECK(st.mask == m0);
    CHECK(st.mask.density() <= 0.1);
  }
  auto dense = setup_experiment(small_config(Algorithm::kDenseFedAvg));
  CHECK(dense.mask.empty());
  const auto m = run_round(dense, 1);
  CHECK(m.density == 1.0);

  auto fed = setup_experiment(small_config(Algorithm::kFedTiny));
  CHECK(fed.selection.performed);
  CHECK(fed.selection.adaptive);
  auto prog = setup_experiment(small_config(Algorithm::kProgressiveOnly));
  CHECK_FALSE(prog.selection.adaptive);
}

TEST_CASE("runs are deterministic and schedule independent") {
  auto cfg = small_config();
  const auto a = run_experiment(cfg);
  cfg.workers = 3;
  const auto b = run_experiment(cfg);
  REQUIRE(a.rounds.size() == b.rounds.size());
  for (std::size_t i = 0; i < a.rounds.size(); ++i) CHECK(same_metrics(a.rounds[i], b.rounds[i]));
  CHECK(a.model == b.model);
  CHECK(a.mask == b.mask);
  CHECK(a.final_round().density <= cfg.density);
}

TEST_CASE("dense FedAvg learns blobs") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto cfg = small_config(Algorithm::kDenseFedAvg);
    cfg.seed = seed;
    cfg.spread = 0.2;
    cfg.rounds = 50;
    auto st = setup_experiment(cfg);
    for (std::size_t r = 1; r <= cfg.rounds; ++r) run_round(st, r);
    std::size_t correct = 0, total = 0;
    for (const auto& c : st.clients) {
      const auto ev = evaluate_global(st.global, c);
      correct += static_cast<std::size_t>(std::llround(ev.accuracy * c.size()));
      total += c.size();
    }
    CAPTURE(seed);
    CHECK(static_cast<double>(correct) / total > 0.9);
  }
}
