#include "fedtiny/bn_select.hpp"

#include <cmath>
#include <limits>

#include "fedtiny/engine.hpp"
#include "fedtiny/error.hpp"
#include "fedtiny/parallel.hpp"

namespace fedtiny {

BNStats read_bn_stats(const Network& net) {
  BNStats s;
  for (auto i : net.bn_layers()) {
    s.layers.push_back(i);
    s.mean.push_back(net.bn(i).mean);
    s.var.push_back(net.bn(i).var);
  }
  return s;
}

void install_bn_stats(Network& net, const BNStats& stats) {
  require(stats.layers == net.bn_layers(), ErrorCode::kShapeMismatch,
          "batch-norm statistics do not match the network's batch-norm layers");
  for (std::size_t k = 0; k < stats.layers.size(); ++k) {
    auto& s = net.bn(stats.layers[k]);
    require(stats.mean[k].size() == s.features() && stats.var[k].size() == s.features(),
            ErrorCode::kShapeMismatch, "batch-norm statistics width mismatch");
    s.mean = stats.mean[k];
    s.var = stats.var[k];
  }
}

BNReport client_bn_pass(const Network& candidate, std::size_t candidate_id, const Dataset& dev,
                        std::size_t batch_size) {
  require(dev.size() >= 1, ErrorCode::kInvalidArgument, "development set is empty");
  Network work = candidate;
  // A lone sample has no batch variance; it leaves the statistics as they are.
  if (dev.size() >= 2) {
    for (auto [b, e] : batch_ranges(dev.size(), batch_size)) {
      const Dataset batch = dev.slice(b, e);
      forward(work, batch.features, Mode::kTrain);
    }
  }
  return {candidate_id, read_bn_stats(work), dev.size()};
}

BNStats aggregate_bn(std::span<const BNReport> reports, SigmaAggregation sigma) {
  require(!reports.empty(), ErrorCode::kInvalidArgument, "no batch-norm reports to aggregate");
  const auto& first = reports.front().stats;
  double total = 0.0;
  for (const auto& r : reports) {
    require(r.samples >= 1, ErrorCode::kInvalidArgument, "report with zero samples");
    require(r.stats.layers == first.layers, ErrorCode::kShapeMismatch,
            "batch-norm reports cover different layers");
    for (std::size_t k = 0; k < first.layers.size(); ++k)
      require(r.stats.mean[k].size() == first.mean[k].size() &&
                  r.stats.var[k].size() == first.var[k].size(),
              ErrorCode::kShapeMismatch, "batch-norm report width mismatch");
    total += static_cast<double>(r.samples);
  }
  BNStats out;
  out.layers = first.layers;
  for (std::size_t k = 0; k < first.layers.size(); ++k) {
    const auto f = first.mean[k].size();
    std::vector<double> mean(f, 0.0), second(f, 0.0);
    for (const auto& r : reports) {
      const double w = static_cast<double>(r.samples) / total;
      for (std::size_t j = 0; j < f; ++j) {
        mean[j] += w * r.stats.mean[k][j];
        second[j] += w * (sigma == SigmaAggregation::kStdDev ? std::sqrt(r.stats.var[k][j])
                                                              : r.stats.var[k][j]);
      }
    }
    if (sigma == SigmaAggregation::kStdDev)
      for (auto& v : second) v *= v;
    out.mean.push_back(std::move(mean));
    out.var.push_back(std::move(second));
  }
  return out;
}

ScoreReport client_score(const Network& candidate, std::size_t candidate_id, const Dataset& dev,
                         std::size_t batch_size) {
  require(dev.size() >= 1, ErrorCode::kInvalidArgument, "development set is empty");
  double sum = 0.0;
  for (auto [b, e] : batch_ranges(dev.size(), batch_size, 1)) {
    const Dataset batch = dev.slice(b, e);
    const auto logits = infer(candidate, batch.features);
    const auto lg = softmax_cross_entropy(logits, batch.labels);
    sum += lg.loss.value * static_cast<double>(lg.loss.count);
  }
  return {candidate_id, sum / static_cast<double>(dev.size()), dev.size()};
}

std::size_t select_candidate(const std::vector<std::vector<ScoreReport>>& reports,
                             std::span<const std::size_t> dev_sizes, std::size_t candidates) {
  require(candidates >= 1, ErrorCode::kInvalidArgument, "no candidates to select from");
  require(!reports.empty() && reports.size() == dev_sizes.size(), ErrorCode::kInvalidArgument,
          "need one report list and one dev size per client");
  double total = 0.0;
  for (auto n : dev_sizes) total += static_cast<double>(n);
  require(total > 0.0, ErrorCode::kInvalidArgument, "development sets are empty");

  std::vector<double> score(candidates, 0.0);
  for (std::size_t k = 0; k < reports.size(); ++k) {
    std::vector<bool> seen(candidates, false);
    for (const auto& r : reports[k]) {
      require(r.candidate < candidates && !seen[r.candidate], ErrorCode::kInvalidArgument,
              "client " + std::to_string(k) + " sent an unknown or duplicate candidate report");
      require(std::isfinite(r.loss), ErrorCode::kInvalidArgument, "non-finite candidate score");
      seen[r.candidate] = true;
      score[r.candidate] += static_cast<double>(dev_sizes[k]) / total * r.loss;
    }
    for (std::size_t c = 0; c < candidates; ++c)
      require(seen[c], ErrorCode::kInvalidArgument,
              "missing report from client " + std::to_string(k) + " for candidate " +
                  std::to_string(c));
  }
  std::size_t best = 0;
  for (std::size_t c = 1; c < candidates; ++c)
    if (score[c] < score[best]) best = c;
  return best;
}

Network materialize(const Network& dense, const Candidate& cand) {
  Network net = dense;
  apply_mask(net, cand.mask);
  return net;
}

namespace {

void check_pool(const std::vector<Candidate>& pool, std::span<const Dataset> devs) {
  require(!pool.empty(), ErrorCode::kInvalidArgument, "candidate pool is empty");
  require(!devs.empty(), ErrorCode::kInvalidArgument, "no client development sets");
  for (std::size_t c = 0; c < pool.size(); ++c)
    require(pool[c].id == c, ErrorCode::kInvalidArgument, "candidate ids must be 0..C-1 in order");
}

SelectionResult score_and_pick(std::vector<Network> nets, const std::vector<Candidate>& pool,
                               std::span<const Dataset> devs, const SelectionOptions& opts) {
  const auto C = pool.size(), K = devs.size();
  std::vector<std::vector<ScoreReport>> scores(K, std::vector<ScoreReport>(C));
  parallel_for(K * C, opts.workers, [&](std::size_t item) {
    const auto k = item / C, c = item % C;
    scores[k][c] = client_score(nets[c], c, devs[k], opts.batch_size);
  });
  std::vector<std::size_t> sizes;
  double total = 0.0;
  for (const auto& d : devs) {
    sizes.push_back(d.size());
    total += static_cast<double>(d.size());
  }
  SelectionResult res;
  res.chosen = select_candidate(scores, sizes, C);
  res.scores.assign(C, 0.0);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t c = 0; c < C; ++c)
      res.scores[c] += static_cast<double>(sizes[k]) / total * scores[k][c].loss;
  res.model = std::move(nets[res.chosen]);
  res.mask = pool[res.chosen].mask;
  return res;
}

}  // namespace

SelectionResult adaptive_bn_select(const Network& dense, const std::vector<Candidate>& pool,
                                   std::span<const Dataset> dev_sets,
                                   const SelectionOptions& opts) {
  check_pool(pool, dev_sets);
  const auto C = pool.size(), K = dev_sets.size();
  std::vector<Network> nets;
  nets.reserve(C);
  for (const auto& cand : pool) nets.push_back(materialize(dense, cand));

  std::vector<std::vector<BNReport>> reports(C, std::vector<BNReport>(K));
  parallel_for(K * C, opts.workers, [&](std::size_t item) {
    const auto c = item / K, k = item % K;
    reports[c][k] = client_bn_pass(nets[c], c, dev_sets[k], opts.batch_size);
  });
  for (std::size_t c = 0; c < C; ++c)
    install_bn_stats(nets[c], aggregate_bn(reports[c], opts.sigma));
  return score_and_pick(std::move(nets), pool, dev_sets, opts);
}

SelectionResult vanilla_select(const Network& dense, const std::vector<Candidate>& pool,
                               std::span<const Dataset> dev_sets, const SelectionOptions& opts) {
  check_pool(pool, dev_sets);
  std::vector<Network> nets;
  nets.reserve(pool.size());
  for (const auto& cand : pool) nets.push_back(materialize(dense, cand));
  return score_and_pick(std::move(nets), pool, dev_sets, opts);
}

}  // namespace fedtiny
