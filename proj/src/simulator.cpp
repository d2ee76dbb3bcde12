#include "fedtiny/simulator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>

#include "fedtiny/bn_select.hpp"
#include "fedtiny/engine.hpp"
#include "fedtiny/error.hpp"
#include "fedtiny/parallel.hpp"
#include "fedtiny/prog_prune.hpp"
#include "fedtiny/pruning.hpp"
#include "fedtiny/rng.hpp"

namespace fedtiny {

namespace {

// Stream tags for derive_seed.
enum : std::uint64_t {
  kSeedData = 1,
  kSeedShuffle,
  kSeedPartition,
  kSeedDev,
  kSeedModel,
  kSeedPretrain,
  kSeedPool,
  kSeedMask,
  kSeedLocal,
  kSeedTopK,
  kSeedSample,
};

std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

}  // namespace

Evaluation evaluate_global(const Network& model, const Dataset& test) {
  require(test.size() >= 1, ErrorCode::kInvalidArgument, "test set is empty");
  constexpr std::size_t kChunk = 1024;
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t b = 0; b < test.size(); b += kChunk) {
    const auto e = std::min(test.size(), b + kChunk);
    const Dataset part = test.slice(b, e);
    const auto logits = infer(model, part.features);
    const auto lg = softmax_cross_entropy(logits, part.labels);
    loss += lg.loss.value * static_cast<double>(part.size());
    for (std::size_t i = 0; i < part.size(); ++i) {
      auto row = logits.row(i);
      const auto best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
      correct += best == part.labels[i] ? 1 : 0;
    }
  }
  const double n = static_cast<double>(test.size());
  return {static_cast<double>(correct) / n, loss / n};
}

TrainStats train_local(Network& net, const Mask& mask, const Dataset& data,
                       const TrainOptions& opts) {
  TrainStats stats;
  if (data.size() < 2) return stats;
  std::size_t batches_seen = 0;
  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    const auto order = permutation(data.size(), derive_seed(opts.seed, {epoch}));
    double loss_sum = 0.0;
    for (auto [b, e] : batch_ranges(data.size(), opts.batch_size)) {
      const std::span<const std::size_t> idx(order.data() + b, e - b);
      const Dataset batch = data.subset(idx);
      ForwardCache cache;
      const auto logits = forward(net, batch.features, Mode::kTrain, &cache);
      const auto res = backward(net, logits, batch.labels, cache);
      sgd_step(net, res.grads, mask, opts.lr);
      loss_sum += res.loss.value * static_cast<double>(res.loss.count);
      if (batches_seen++ < 5)
        stats.peak_activation_values =
            std::max(stats.peak_activation_values, cache.activation_values());
      ++stats.steps;
    }
    stats.epoch_losses.push_back(loss_sum / static_cast<double>(data.size()));
  }
  return stats;
}

TrainStats pretrain_server(Network& net, const Dataset& server, const TrainOptions& opts) {
  if (opts.epochs == 0) return {};
  require(server.size() >= 2, ErrorCode::kInvalidArgument,
          "server pretraining needs at least two server samples");
  return train_local(net, Mask{}, server, opts);
}

Network average_models(std::span<const Network> models, std::span<const double> weights,
                       SigmaAggregation sigma) {
  require(!models.empty() && models.size() == weights.size(), ErrorCode::kInvalidArgument,
          "need one weight per model");
  double total = 0.0;
  for (double w : weights) {
    require(w >= 0.0 && std::isfinite(w), ErrorCode::kInvalidArgument,
            "aggregation weights must be finite and non-negative");
    total += w;
  }
  require(total > 0.0, ErrorCode::kInvalidArgument, "aggregation weights sum to zero");

  Network out = models.front();
  if (models.size() == 1) return out;
  const auto accumulate = [&](auto&& get) {
    auto& dst = get(out);
    std::fill(dst.begin(), dst.end(), 0.0);
    for (std::size_t k = 0; k < models.size(); ++k) {
      const auto& src = get(models[k]);
      require(src.size() == dst.size(), ErrorCode::kShapeMismatch, "model shapes differ");
      const double w = weights[k] / total;
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += w * src[j];
    }
  };
  for (std::size_t li = 0; li < out.size(); ++li) {
    if (std::holds_alternative<LinearLayer>(out.layer(li))) {
      accumulate([li](auto& n) -> auto& { return n.linear(li).weight.storage(); });
      accumulate([li](auto& n) -> auto& { return n.linear(li).bias.storage(); });
    } else if (std::holds_alternative<BatchNormLayer>(out.layer(li))) {
      accumulate([li](auto& n) -> auto& { return n.bn(li).scale; });
      accumulate([li](auto& n) -> auto& { return n.bn(li).shift; });
      accumulate([li](auto& n) -> auto& { return n.bn(li).mean; });
      if (sigma == SigmaAggregation::kVariance) {
        accumulate([li](auto& n) -> auto& { return n.bn(li).var; });
      } else {
        auto& dst = out.bn(li).var;
        std::vector<double> sd(dst.size(), 0.0);
        for (std::size_t k = 0; k < models.size(); ++k) {
          const auto& src = models[k].bn(li).var;
          require(src.size() == dst.size(), ErrorCode::kShapeMismatch, "model shapes differ");
          const double w = weights[k] / total;
          for (std::size_t j = 0; j < sd.size(); ++j) sd[j] += w * std::sqrt(src[j]);
        }
        for (std::size_t j = 0; j < sd.size(); ++j) dst[j] = sd[j] * sd[j];
      }
    }
  }
  return out;
}

std::vector<std::size_t> sample_clients(std::size_t clients, double fraction, std::size_t round,
                                        std::uint64_t seed) {
  require(clients >= 1, ErrorCode::kInvalidArgument, "no clients to sample");
  require(fraction > 0.0 && fraction <= 1.0, ErrorCode::kInvalidArgument,
          "client fraction must lie in (0, 1]");
  const auto m = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(fraction * static_cast<double>(clients))), 1, clients);
  if (m == clients) {
    std::vector<std::size_t> all(clients);
    std::iota(all.begin(), all.end(), 0);
    return all;
  }
  auto idx = permutation(clients, derive_seed(seed, {kSeedSample, round}));
  idx.resize(m);
  std::sort(idx.begin(), idx.end());
  return idx;
}

SimState setup_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  SimState st;
  st.config = cfg;
  st.workers = cfg.resolved_workers();
  const auto seed = cfg.seed;

  Dataset all = cfg.csv_path.empty()
                    ? make_blobs(cfg.classes, cfg.per_class, cfg.dim, cfg.spread,
                                 derive_seed(seed, {kSeedData}))
                    : load_csv(cfg.csv_path, CsvOptions{cfg.csv_header});
  all = shuffled(all, derive_seed(seed, {kSeedShuffle}));
  const double n = static_cast<double>(all.size());
  const auto n_test = std::max<std::size_t>(1, static_cast<std::size_t>(cfg.test_fraction * n));
  const auto n_server = static_cast<std::size_t>(cfg.server_fraction * n);
  require(n_test + n_server < all.size(), ErrorCode::kInvalidArgument,
          "data: no samples left for clients after test/server splits");
  st.test = all.slice(0, n_test);
  if (n_server > 0) st.server = all.slice(n_test, n_test + n_server);
  const Dataset pool = all.slice(n_test + n_server, all.size());

  st.clients = dirichlet_partition(pool, {cfg.clients, cfg.alpha, derive_seed(seed, {kSeedPartition})});
  for (std::size_t k = 0; k < st.clients.size(); ++k) {
    auto& local = st.clients[k];
    const auto idx = dev_indices(local.size(), cfg.dev_ratio, derive_seed(seed, {kSeedDev, k}));
    st.dev_sets.push_back(local.subset(idx));
    if (cfg.dev_disjoint && idx.size() < local.size()) {
      std::vector<std::size_t> rest;
      for (std::size_t i = 0, j = 0; i < local.size(); ++i) {
        if (j < idx.size() && idx[j] == i) {
          ++j;
          continue;
        }
        rest.push_back(i);
      }
      local = local.subset(rest);
    }
  }

  MlpSpec spec;
  spec.widths.push_back(all.dim());
  spec.widths.insert(spec.widths.end(), cfg.hidden.begin(), cfg.hidden.end());
  spec.widths.push_back(all.classes);
  spec.batch_norm = cfg.batch_norm;
  spec.bn_momentum = cfg.bn_momentum;
  spec.bn_eps = cfg.bn_eps;
  spec.blocks = cfg.blocks;
  Network dense = Network::mlp(spec, derive_seed(seed, {kSeedModel}));

  if (cfg.pretrain_epochs > 0) {
    require(st.server.size() >= 2, ErrorCode::kInvalidArgument,
            "data.server_fraction: pretraining needs at least two server samples");
    st.pretrain_losses = pretrain_server(dense, st.server,
                                         {cfg.pretrain_epochs, cfg.batch_size, cfg.lr,
                                          derive_seed(seed, {kSeedPretrain})})
                             .epoch_losses;
  }

  const SelectionOptions sel{cfg.batch_size, cfg.bn_sigma, st.workers};
  switch (cfg.algorithm) {
    case Algorithm::kDenseFedAvg:
      st.global = std::move(dense);
      st.cost_tag = CostAlgorithm::kDenseTrain;
      break;
    case Algorithm::kStaticRandom:
    case Algorithm::kStaticMagnitude: {
      const auto d = feasible_uniform_densities(dense, cfg.density);
      st.mask = cfg.algorithm == Algorithm::kStaticRandom
                    ? random_mask(dense, d, derive_seed(seed, {kSeedMask}))
                    : magnitude_mask(dense, d);
      st.global = std::move(dense);
      apply_mask(st.global, st.mask);
      st.cost_tag = CostAlgorithm::kStaticSparse;
      break;
    }
    case Algorithm::kFedTiny:
    case Algorithm::kProgressiveOnly:
    case Algorithm::kAdaptiveBNOnly: {
      PoolOptions popts;
      popts.noise = cfg.noise;
      popts.min_survivors = cfg.min_survivors;
      const auto pool_c = generate_candidate_pool(dense, cfg.density, cfg.resolved_pool_size(),
                                                  popts, derive_seed(seed, {kSeedPool}));
      const bool adaptive = cfg.algorithm != Algorithm::kProgressiveOnly;
      auto res = adaptive ? adaptive_bn_select(dense, pool_c, st.dev_sets, sel)
                          : vanilla_select(dense, pool_c, st.dev_sets, sel);
      st.selection.performed = true;
      st.selection.adaptive = adaptive;
      st.selection.chosen = res.chosen;
      st.selection.scores = res.scores;
      for (const auto& c : pool_c) st.selection.layer_densities.push_back(c.layer_densities);
      st.global = std::move(res.model);
      st.mask = std::move(res.mask);
      st.progressive = cfg.algorithm != Algorithm::kAdaptiveBNOnly;
      st.cost_tag = st.progressive ? CostAlgorithm::kFedTiny : CostAlgorithm::kStaticSparse;
      break;
    }
  }
  return st;
}

namespace {

struct ClientOutcome {
  Network model;
  std::vector<std::vector<GradEntry>> entries;  // per targeted layer
  std::size_t topk_peak = 0;
  std::size_t topk_violations = 0;
  std::size_t activation_values = 0;
};

double round_lr(const ExperimentConfig& cfg, std::size_t round) {
  if (cfg.lr_decay == LrDecay::kConstant) return cfg.lr;
  const double progress = static_cast<double>(round - 1) / static_cast<double>(cfg.rounds);
  return cfg.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace

RoundMetrics run_round(SimState& st, std::size_t round) {
  const auto start = std::chrono::steady_clock::now();
  const auto& cfg = st.config;
  RoundMetrics m;
  m.round = round;

  const auto participants = sample_clients(st.clients.size(), cfg.client_fraction, round, cfg.seed);
  m.participants = participants.size();

  std::vector<std::size_t> targets;
  std::vector<std::size_t> counts;
  if (st.progressive && !st.mask.empty()) {
    m.pruning_round = is_pruning_round(round, cfg.schedule);
    targets = target_layers(round, cfg.schedule, st.global);
    for (auto l : targets) {
      const auto* lm = st.mask.find(l);
      const auto kept = lm->nnz();
      const auto pn = pruning_number(round * cfg.local_epochs, cfg.local_epochs, cfg.schedule, kept,
                                     lm->size() - kept);
      counts.push_back(pn.count);
      m.clamped_layers += pn.clamped ? 1 : 0;
      m.topk_capacity += pn.count;
    }
  }
  m.targeted_layers = targets;

  const double lr = round_lr(cfg, round);
  std::vector<ClientOutcome> outcomes(participants.size());
  parallel_for(participants.size(), st.workers, [&](std::size_t slot) {
    const auto k = participants[slot];
    const auto& data = st.clients[k];
    auto& out = outcomes[slot];
    out.model = st.global;
    const auto stats = train_local(out.model, st.mask, data,
                                   {cfg.local_epochs, cfg.batch_size, lr,
                                    derive_seed(cfg.seed, {kSeedLocal, round, k})});
    out.activation_values = stats.peak_activation_values;
    out.entries.assign(targets.size(), {});
    if (targets.empty() || data.size() < 2) return;

    // One extra batch on a scratch copy: dense gradients for the targeted layers.
    auto order = permutation(data.size(), derive_seed(cfg.seed, {kSeedTopK, round, k}));
    order.resize(std::min(cfg.batch_size, data.size()));
    const Dataset batch = data.subset(order);
    Network scratch = out.model;
    ForwardCache cache;
    const auto logits = forward(scratch, batch.features, Mode::kTrain, &cache);
    const auto lg = softmax_cross_entropy(logits, batch.labels);
    const auto grads = backward_from(scratch, cache, lg.grad, targets);
    for (std::size_t t = 0; t < targets.size(); ++t) {
      const auto buf = topk_collect(grads[targets[t]].weight.values(), *st.mask.find(targets[t]),
                                    counts[t]);
      out.topk_peak = std::max(out.topk_peak, buf.peak_size());
      out.topk_violations += buf.peak_size() > buf.capacity() ? 1 : 0;
      out.entries[t] = buf.entries();
    }
  });

  // Server: aggregate in fixed participant order.
  std::vector<Network> models;
  std::vector<double> weights;
  models.reserve(outcomes.size());
  for (std::size_t slot = 0; slot < outcomes.size(); ++slot) {
    models.push_back(std::move(outcomes[slot].model));
    weights.push_back(cfg.weighted_aggregation
                          ? static_cast<double>(st.clients[participants[slot]].size())
                          : 1.0);
  }
  st.global = average_models(models, weights, cfg.bn_sigma);
  if (!st.mask.empty()) apply_mask(st.global, st.mask);

  const Mask mask_before = st.mask;
  m.nnz_before = st.mask.nnz();
  std::size_t activation_values = 0;
  for (const auto& o : outcomes) {
    m.topk_peak = std::max(m.topk_peak, o.topk_peak);
    m.topk_violations += o.topk_violations;
    activation_values = std::max(activation_values, o.activation_values);
  }
  for (std::size_t t = 0; t < targets.size(); ++t) {
    if (counts[t] == 0) continue;
    std::vector<std::vector<GradEntry>> reported;
    reported.reserve(outcomes.size());
    for (const auto& o : outcomes) reported.push_back(o.entries[t]);
    const auto agg = aggregate_topk(reported, weights);
    const auto* lm = st.mask.find(targets[t]);
    const auto plan = plan_grow_prune(*lm, st.global.linear(targets[t]).weight.values(), agg, counts[t]);
    apply_plan(st.mask, st.global, plan);
    m.grown += plan.grow.size();
    m.dropped += plan.drop.size();
    m.filled += plan.filled;
  }
  m.nnz_after = st.mask.nnz();
  m.density = st.mask.density();

  const auto eval = evaluate_global(st.global, st.test);
  m.accuracy = eval.accuracy;
  m.loss = eval.loss;

  // Cost accounting for the round, per participating client.
  const auto b = cfg.bit_width;
  const Mask dense_mask;
  for (auto k : participants) {
    const auto nk = st.clients[k].size();
    const double fd = forward_flops(st.global, dense_mask, nk);
    const double fs = forward_flops(st.global, mask_before, nk);
    double extra = 0.0;
    if (!targets.empty() && nk >= 2)
      extra = extra_gradient_flops(st.global, mask_before, targets, std::min(cfg.batch_size, nk));
    m.extra_flops = std::max(m.extra_flops, extra);
    m.peak_flops = std::max(
        m.peak_flops,
        round_peak_flops(st.cost_tag, fd, fs, static_cast<double>(cfg.local_epochs), extra));
  }
  const double mpd = model_storage(st.global, dense_mask, b).bytes();
  const double mps = model_storage(st.global, mask_before, b).bytes();
  const double ma = static_cast<double>(activation_values) * static_cast<double>(b) / 8.0;
  m.memory_bytes = training_memory(st.cost_tag, mpd, mps, ma, b, m.topk_capacity).total;

  m.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return m;
}

std::vector<std::pair<std::string, std::uint64_t>> resolved_seeds(const ExperimentConfig& cfg) {
  const auto s = cfg.seed;
  return {{"base", s},
          {"data", derive_seed(s, {kSeedData})},
          {"shuffle", derive_seed(s, {kSeedShuffle})},
          {"partition", derive_seed(s, {kSeedPartition})},
          {"model", derive_seed(s, {kSeedModel})},
          {"pretrain", derive_seed(s, {kSeedPretrain})},
          {"pool", derive_seed(s, {kSeedPool})},
          {"static_mask", derive_seed(s, {kSeedMask})}};
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const RoundObserver& observer) {
  SimState st = setup_experiment(cfg);
  ExperimentResult res;
  res.config = cfg;
  res.selection = st.selection;
  for (std::size_t r = 1; r <= cfg.rounds; ++r) {
    res.rounds.push_back(run_round(st, r));
    if (observer) observer(res.rounds.back());
  }
  res.model = std::move(st.global);
  res.mask = std::move(st.mask);
  return res;
}

}  // namespace fedtiny
