#include <cmath>
#include <map>
#include <set>
#include <numbers>
#include <random>

#include "doctest.h"
#include "fedtiny/error.hpp"
#include "fedtiny/prog_prune.hpp"
#include "fedtiny/pruning.hpp"
#include "fedtiny/rng.hpp"
#include "oracles.hpp"

using namespace fedtiny;

namespace {

LayerMask random_layer_mask(Rng& rng, std::size_t rows, std::size_t cols, double keep) {
  std::bernoulli_distribution B(keep);
  LayerMask m{3, rows, cols, std::vector<std::uint8_t>(rows * cols)};
  for (auto& b : m.bits) b = B(rng);
  return m;
}

std::vector<double> random_values(Rng& rng, std::size_t n, int levels) {
  // Few distinct magnitudes so ties are common.
  std::uniform_int_distribution<int> L(-levels, levels);
  std::vector<double> v(n);
  for (auto& x : v) x = 0.25 * L(rng);
  return v;
}

std::vector<std::size_t> sorted_indices(const std::vector<GradEntry>& es) {
  std::vector<std::size_t> out;
  for (const auto& e : es) out.push_back(e.index);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST_CASE("top-K buffer equals a full sort, ties to the lower index") {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    std::uniform_int_distribution<std::size_t> N(1, 600), A(0, 80);
    const auto n = N(rng);
    const auto mask = random_layer_mask(rng, 1, n, 0.3);
    const auto g = random_values(rng, n, 6);
    const auto a = A(rng);
    const auto buf = topk_collect(g, mask, a);
    std::vector<std::uint8_t> pruned(n);
    for (std::size_t i = 0; i < n; ++i) pruned[i] = !mask.bits[i];
    CHECK(sorted_indices(buf.entries()) == oracle::topk_by_sort(g, pruned, a));
    CHECK(buf.peak_size() <= a);
  }
  TopKBuffer empty(0);
  empty.push(1, 5.0);
  CHECK(empty.size() == 0);
}

TEST_CASE("entries come out in rank order") {
  TopKBuffer b(3);
  for (auto [i, v] : std::vector<std::pair<std::size_t, double>>{
           {0, 1.0}, {1, -2.0}, {2, 2.0}, {3, 0.5}, {4, -3.0}})
    b.push(i, v);
  const auto e = b.entries();
  REQUIRE(e.size() == 3);
  CHECK(e[0].index == 4);
  CHECK(e[1].index == 1);
  CHECK(e[2].index == 2);
}

TEST_CASE("pruning number follows the cosine schedule") {
  PruneSchedule s;
  s.stop_round = 100;
  s.beta = 0.15;
  const std::size_t E = 5;
  for (std::size_t t : {0u, 50u, 125u, 250u, 400u, 500u, 505u}) {
    const double expect =
        t > 500 ? 0.0 : std::floor(0.15 * (1 + std::cos(t * std::numbers::pi / 500.0)) * 1000);
    const auto pn = pruning_number(t, E, s, 1000, 100000);
    CHECK(pn.count == static_cast<std::size_t>(expect));
    CHECK_FALSE(pn.clamped);
  }
  // t = 0: 0.3 * 1000 = 300, capped by the pruned count.
  const auto capped = pruning_number(0, E, s, 1000, 120);
  CHECK(capped.count == 120);
  CHECK(capped.clamped);
  CHECK(pruning_number(0, E, s, 1000, 5000, false).count == 0);
}

TEST_CASE("pruning rounds and targeted layers") {
  Network net = Network::mlp({{4, 8, 8, 8, 8, 8, 3}, true, 0.9, 1e-5, 5}, 1);
  PruneSchedule s;
  s.interval = 10;
  s.stop_round = 100;
  CHECK_FALSE(is_pruning_round(9, s));
  CHECK(is_pruning_round(10, s));
  CHECK(is_pruning_round(100, s));
  CHECK_FALSE(is_pruning_round(110, s));
  CHECK(target_layers(7, s, net).empty());

  const auto eligible = net.prunable_layers();
  // Backward block order: the first adjustment touches the deepest eligible block.
  const auto first = target_layers(10, s, net);
  REQUIRE_FALSE(first.empty());
  CHECK(net.block_of(first.back()) == net.block_of(eligible.back()));
  std::set<std::size_t> seen;
  for (std::size_t r = 10; r <= 100; r += 10)
    for (auto l : target_layers(r, s, net)) seen.insert(l);
  CHECK(seen == std::set<std::size_t>(eligible.begin(), eligible.end()));

  s.order = BlockOrder::kForward;
  CHECK(net.block_of(target_layers(10, s, net).front()) == net.block_of(eligible.front()));
  s.granularity = Granularity::kLayer;
  CHECK(target_layers(10, s, net) == std::vector<std::size_t>{eligible.front()});
  CHECK(target_layers(20, s, net) == std::vector<std::size_t>{eligible[1]});
  s.granularity = Granularity::kEntire;
  CHECK(target_layers(30, s, net) == eligible);
}

TEST_CASE("top-K aggregation matches a dense brute force") {
  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 50, k = 1 + trial % 7;
    std::vector<std::vector<GradEntry>> reports(k);
    std::vector<std::vector<double>> dense(k, std::vector<double>(n, 0.0));
    std::vector<double> w(k);
    std::uniform_real_distribution<double> U(-1.0, 1.0), W(1.0, 100.0);
    std::bernoulli_distribution B(0.2);
    for (std::size_t c = 0; c < k; ++c) {
      w[c] = std::floor(W(rng));
      for (std::size_t i = 0; i < n; ++i)
        if (B(rng)) {
          const double g = U(rng);
          reports[c].push_back({i, g});
          dense[c][i] = g;
        }
    }
    const auto agg = aggregate_topk(reports, w);
    const auto expect = oracle::weighted_mean(dense, w);
    std::map<std::size_t, double> got;
    for (const auto& e : agg) got[e.index] = e.value;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = got.count(i) ? got[i] : 0.0;
      CHECK(std::abs(v - expect[i]) < 1e-12);
    }
    CHECK(std::is_sorted(agg.begin(), agg.end(),
                         [](const GradEntry& a, const GradEntry& b) { return a.index < b.index; }));
  }
}

TEST_CASE("grow/prune plan follows the oracle and conserves density") {
  Rng rng(8);
  for (int trial = 0; trial < 60; ++trial) {
    Network net = Network::mlp({{3, 12, 10, 2}, false, 0.9, 1e-5, 5}, trial);
    const auto layer = net.prunable_layers().front();
    auto mask = random_mask(net, 0.3, trial);
    apply_mask(net, mask);
    auto& lm = *mask.find(layer);
    auto& w = net.linear(layer).weight.storage();
    // Tied magnitudes among survivors.
    for (std::size_t i = 0; i < w.size(); ++i)
      if (lm.bits[i]) w[i] = 0.1 * std::round(10.0 * w[i]);
    const auto g = random_values(rng, lm.size(), 4);
    std::vector<GradEntry> agg;
    for (std::size_t i = 0; i < g.size(); ++i)
      if (!lm.bits[i] && i % 3 != 0) agg.push_back({i, g[i]});
    const auto unpruned = lm.nnz(), pruned = lm.size() - unpruned;
    const auto a = std::min<std::size_t>(trial % 15, std::min(unpruned, pruned));

    const auto plan = plan_grow_prune(lm, w, agg, a);
    // Oracle for grow: reported gradients by rank, then lowest unreported pruned indices.
    std::vector<double> ranked(lm.size(), 0.0);
    std::vector<std::uint8_t> reported(lm.size(), 0);
    for (const auto& e : agg) {
      ranked[e.index] = e.value;
      reported[e.index] = 1;
    }
    auto grow = oracle::topk_by_sort(ranked, reported, a);
    for (std::size_t i = 0; grow.size() < a && i < lm.size(); ++i)
      if (!lm.bits[i] && !reported[i]) grow.push_back(i);
    std::sort(grow.begin(), grow.end());
    auto got_grow = plan.grow;
    std::sort(got_grow.begin(), got_grow.end());
    CHECK(got_grow == grow);
    // Oracle for drop: smallest |w| among survivors = top-a of 1/|w| ordering.
    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < lm.size(); ++i)
      if (lm.bits[i]) kept.push_back(i);
    std::stable_sort(kept.begin(), kept.end(),
                     [&](std::size_t x, std::size_t y) { return std::abs(w[x]) < std::abs(w[y]); });
    kept.resize(a);
    std::sort(kept.begin(), kept.end());
    auto got_drop = plan.drop;
    std::sort(got_drop.begin(), got_drop.end());
    CHECK(got_drop == kept);

    const auto before = mask.nnz();
    apply_plan(mask, net, plan);
    CHECK(mask.nnz() == before);
    for (auto i : plan.grow) CHECK(net.linear(layer).weight[i] == 0.0);
    CHECK(Mask::from_nonzeros(net).nnz() <= mask.nnz());
  }
}

TEST_CASE("plan rejects an oversized pruning number") {
  LayerMask lm{1, 1, 4, {1, 0, 0, 0}};
  const std::vector<double> w{1.0, 0.0, 0.0, 0.0};
  CHECK_THROWS_AS(plan_grow_prune(lm, w, {}, 2), Error);
}
