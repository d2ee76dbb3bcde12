#include <random>

#include "doctest.h"
#include "fedtiny/bn_select.hpp"
#include "fedtiny/engine.hpp"
#include "fedtiny/error.hpp"
#include "fedtiny/rng.hpp"
#include "oracles.hpp"

using namespace fedtiny;

namespace {

BNReport random_report(Rng& rng, std::size_t layers, std::size_t width) {
  std::uniform_real_distribution<double> U(-2.0, 2.0), V(0.01, 3.0);
  std::uniform_int_distribution<std::size_t> S(1, 50);
  BNReport r;
  r.samples = S(rng);
  for (std::size_t l = 0; l < layers; ++l) {
    r.stats.layers.push_back(2 + 3 * l);
    std::vector<double> m(width), v(width);
    for (auto& x : m) x = U(rng);
    for (auto& x : v) x = V(rng);
    r.stats.mean.push_back(m);
    r.stats.var.push_back(v);
  }
  return r;
}

}  // namespace

TEST_CASE("BN aggregation matches brute-force weighted means") {
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<BNReport> reps;
    const std::size_t k = 1 + trial % 6;
    for (std::size_t i = 0; i < k; ++i) reps.push_back(random_report(rng, 2, 5));
    std::vector<double> w;
    for (const auto& r : reps) w.push_back(static_cast<double>(r.samples));

    const auto var_avg = aggregate_bn(reps, SigmaAggregation::kVariance);
    const auto std_avg = aggregate_bn(reps, SigmaAggregation::kStdDev);
    for (std::size_t l = 0; l < 2; ++l) {
      std::vector<std::vector<double>> means, vars, sds;
      for (const auto& r : reps) {
        means.push_back(r.stats.mean[l]);
        vars.push_back(r.stats.var[l]);
        std::vector<double> sd;
        for (double v : r.stats.var[l]) sd.push_back(std::sqrt(v));
        sds.push_back(sd);
      }
      const auto m = oracle::weighted_mean(means, w);
      const auto v = oracle::weighted_mean(vars, w);
      const auto s = oracle::weighted_mean(sds, w);
      for (std::size_t j = 0; j < 5; ++j) {
        CHECK(std::abs(var_avg.mean[l][j] - m[j]) < 1e-12);
        CHECK(std::abs(var_avg.var[l][j] - v[j]) < 1e-12);
        CHECK(std::abs(std_avg.var[l][j] - s[j] * s[j]) < 1e-12);
      }
    }
  }
}

TEST_CASE("BN pass refreshes statistics without touching weights") {
  // linear(2->2) -> BN -> relu -> linear(2->2)
  LinearLayer l0{Tensor({2, 2}, std::vector<double>{1.0, 0.0, 0.5, 2.0}),
                 Tensor({2}, std::vector<double>{0.1, -0.2}), false};
  LinearLayer l1{Tensor({2, 2}, std::vector<double>{1.0, 1.0, 0.0, 1.0}), Tensor({2}, 0.0), false};
  Network net({l0, BatchNormLayer{BNState::identity(2, 0.8, 1e-5)}, ReluLayer{2}, l1}, 2);
  Dataset dev{Tensor({3, 2}, std::vector<double>{1.0, 2.0, -1.0, 0.0, 3.0, 1.0}), {0, 1, 0}, 2};

  const Network before = net;
  const auto rep = client_bn_pass(net, 4, dev, 64);
  CHECK(net == before);
  CHECK(rep.candidate == 4);
  CHECK(rep.samples == 3);

  // Oracle: BN input h = x W^T + b, one batch.
  for (std::size_t f = 0; f < 2; ++f) {
    double mean = 0.0, sq = 0.0;
    std::vector<double> h;
    for (std::size_t i = 0; i < 3; ++i) {
      double v = l0.bias[f];
      for (std::size_t c = 0; c < 2; ++c) v += l0.weight.at(f, c) * dev.features.at(i, c);
      h.push_back(v);
      mean += v / 3.0;
    }
    for (double v : h) sq += (v - mean) * (v - mean) / 3.0;
    CHECK(rep.stats.mean[0][f] == doctest::Approx(0.8 * 0.0 + 0.2 * mean).epsilon(1e-14));
    CHECK(rep.stats.var[0][f] == doctest::Approx(0.8 * 1.0 + 0.2 * sq).epsilon(1e-14));
  }

  const auto lone = client_bn_pass(net, 0, dev.slice(0, 1), 64);
  CHECK(lone.stats == read_bn_stats(net));
}

TEST_CASE("selection is a weighted argmin with ties to the lowest id") {
  std::vector<std::vector<ScoreReport>> reps{
      {{0, 1.0, 10}, {1, 0.5, 10}, {2, 0.5, 10}},
      {{2, 0.9, 30}, {1, 0.9, 30}, {0, 0.2, 30}},
  };
  const std::vector<std::size_t> sizes{10, 30};
  // scores: c0 = 0.25*1 + 0.75*0.2 = 0.4, c1 = c2 = 0.25*0.5 + 0.75*0.9 = 0.8
  CHECK(select_candidate(reps, sizes, 3) == 0);
  reps[1][2].loss = 0.9;
  CHECK(select_candidate(reps, sizes, 3) == 1);

  auto missing = reps;
  missing[0].pop_back();
  CHECK_THROWS_AS(select_candidate(missing, sizes, 3), Error);
  auto dup = reps;
  dup[0][2].candidate = 1;
  CHECK_THROWS_AS(select_candidate(dup, sizes, 3), Error);
}

TEST_CASE("adaptive selection picks the lowest aggregated loss and is schedule independent") {
  Network dense = Network::mlp({{4, 16, 16, 16, 3}, true, 0.9, 1e-5, 5}, 12);
  const auto data = make_blobs(3, 40, 4, 0.7, 5);
  std::vector<Dataset> devs{data.slice(0, 20), data.slice(20, 50), data.slice(50, 120)};
  const auto pool = generate_candidate_pool(dense, 0.2, 6, {}, 3);

  SelectionOptions serial;
  serial.workers = 1;
  SelectionOptions parallel = serial;
  parallel.workers = 3;
  const auto a = adaptive_bn_select(dense, pool, devs, serial);
  const auto b = adaptive_bn_select(dense, pool, devs, parallel);
  CHECK(a.chosen == b.chosen);
  CHECK(a.scores == b.scores);
  CHECK(a.model == b.model);
  REQUIRE(a.scores.size() == 6);
  for (double s : a.scores) CHECK(s >= a.scores[a.chosen]);
  CHECK(a.mask == pool[a.chosen].mask);

  // Installed statistics are the aggregate of the clients' BN passes.
  const auto cand = materialize(dense, pool[a.chosen]);
  std::vector<BNReport> reps;
  for (std::size_t k = 0; k < devs.size(); ++k)
    reps.push_back(client_bn_pass(cand, a.chosen, devs[k], serial.batch_size));
  CHECK(read_bn_stats(a.model) == aggregate_bn(reps, serial.sigma));

  const auto v = vanilla_select(dense, pool, devs, serial);
  CHECK(read_bn_stats(v.model) == read_bn_stats(dense));
}
