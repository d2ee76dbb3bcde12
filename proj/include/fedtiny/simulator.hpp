#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fedtiny/config.hpp"
#include "fedtiny/cost.hpp"
#include "fedtiny/data.hpp"
#include "fedtiny/mask.hpp"
#include "fedtiny/network.hpp"

namespace fedtiny {

struct Evaluation {
  double accuracy = 0.0;
  double loss = 0.0;
};

// Eval-mode top-1 accuracy and mean cross-entropy.
Evaluation evaluate_global(const Network& model, const Dataset& test);

struct TrainOptions {
  std::size_t epochs = 1;
  std::size_t batch_size = 64;
  double lr = 0.05;
  std::uint64_t seed = 0;
};

struct TrainStats {
  std::vector<double> epoch_losses;  // mean training loss per epoch
  std::size_t steps = 0;
  // Largest activation count over the first five batches.
  std::size_t peak_activation_values = 0;
};

// Masked mini-batch SGD over `data`, reshuffled each epoch. A dataset with a
// single sample has no train-mode batch and is skipped.
TrainStats train_local(Network& net, const Mask& mask, const Dataset& data,
                       const TrainOptions& opts);

// Dense SGD on the server-held split; zero epochs leaves `net` untouched.
TrainStats pretrain_server(Network& net, const Dataset& server, const TrainOptions& opts);

// Normalized-weight average of client models, batch-norm moving statistics
// included (the second moment per `sigma`). Models must share one shape.
Network average_models(std::span<const Network> models, std::span<const double> weights,
                       SigmaAggregation sigma = SigmaAggregation::kVariance);

struct RoundMetrics {
  std::size_t round = 0;
  double accuracy = 0.0;
  double loss = 0.0;
  double density = 1.0;
  bool pruning_round = false;
  std::vector<std::size_t> targeted_layers;
  std::size_t grown = 0;
  std::size_t dropped = 0;
  std::size_t filled = 0;          // grow slots without a reported gradient
  std::size_t clamped_layers = 0;  // layers whose cosine count hit a cap
  std::size_t nnz_before = 0;
  std::size_t nnz_after = 0;
  std::size_t topk_capacity = 0;     // sum of a^l_t over targeted layers
  std::size_t topk_peak = 0;         // largest buffer fill observed on any client
  std::size_t topk_violations = 0;   // buffers that ever held more than their capacity
  double extra_flops = 0.0;
  double peak_flops = 0.0;
  double memory_bytes = 0.0;
  std::size_t participants = 0;
  double wall_seconds = 0.0;
};

struct SelectionInfo {
  bool performed = false;
  bool adaptive = false;
  std::size_t chosen = 0;
  std::vector<double> scores;
  std::vector<std::vector<double>> layer_densities;
};

// Everything the round loop needs; produced by setup_experiment().
struct SimState {
  ExperimentConfig config;
  Network global;
  Mask mask;  // empty for dense training
  std::vector<Dataset> clients;
  std::vector<Dataset> dev_sets;
  Dataset test;
  Dataset server;
  SelectionInfo selection;
  std::vector<double> pretrain_losses;
  bool progressive = false;
  CostAlgorithm cost_tag = CostAlgorithm::kDenseTrain;
  std::size_t workers = 1;
};

// Data generation and partitioning, server pretraining, and the algorithm's
// initial structure (candidate pool + selection, static mask, or dense).
SimState setup_experiment(const ExperimentConfig& cfg);

// Indices of the clients taking part in `round`, ascending.
std::vector<std::size_t> sample_clients(std::size_t clients, double fraction, std::size_t round,
                                        std::uint64_t seed);

// Local training on the sampled clients, weighted aggregation, and, on
// pruning rounds, top-K collection and grow/prune adjustment.
RoundMetrics run_round(SimState& state, std::size_t round);

struct ExperimentResult {
  ExperimentConfig config;
  SelectionInfo selection;
  std::vector<RoundMetrics> rounds;
  Network model;
  Mask mask;

  const RoundMetrics& final_round() const { return rounds.back(); }
};

// Named sub-seeds derived from config.seed, as used by setup and the rounds.
std::vector<std::pair<std::string, std::uint64_t>> resolved_seeds(const ExperimentConfig& cfg);

using RoundObserver = std::function<void(const RoundMetrics&)>;

ExperimentResult run_experiment(const ExperimentConfig& cfg, const RoundObserver& observer = {});

}  // namespace fedtiny
