#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fedtiny/data.hpp"
#include "fedtiny/mask.hpp"
#include "fedtiny/network.hpp"
#include "fedtiny/pruning.hpp"

namespace fedtiny {

// Moving statistics of every batch-norm layer, in layer order.
struct BNStats {
  std::vector<std::size_t> layers;
  std::vector<std::vector<double>> mean;
  std::vector<std::vector<double>> var;

  friend bool operator==(const BNStats&, const BNStats&) = default;
};

BNStats read_bn_stats(const Network& net);
void install_bn_stats(Network& net, const BNStats& stats);

struct BNReport {
  std::size_t candidate = 0;
  BNStats stats;
  std::size_t samples = 0;
};

struct ScoreReport {
  std::size_t candidate = 0;
  double loss = 0.0;
  std::size_t samples = 0;
};

// How the second moment is averaged across clients. kStdDev averages sigma
// and squares the result; kVariance averages sigma^2 directly.
enum class SigmaAggregation { kStdDev, kVariance };

// Refreshes the candidate's moving statistics with one pass over `dev` in
// statistics-update mode. Weights are never touched; `candidate` is unchanged.
BNReport client_bn_pass(const Network& candidate, std::size_t candidate_id, const Dataset& dev,
                        std::size_t batch_size);

// |D̂_k|-weighted mean of the client statistics for one candidate.
BNStats aggregate_bn(std::span<const BNReport> reports,
                     SigmaAggregation sigma = SigmaAggregation::kStdDev);

// Eval-mode mean loss over `dev`.
ScoreReport client_score(const Network& candidate, std::size_t candidate_id, const Dataset& dev,
                         std::size_t batch_size);

// argmin over candidates of the dev-size-weighted mean score; ties go to the
// lowest id. `reports[k]` holds client k's reports, one per candidate.
std::size_t select_candidate(const std::vector<std::vector<ScoreReport>>& reports,
                             std::span<const std::size_t> dev_sizes, std::size_t candidates);

struct SelectionOptions {
  std::size_t batch_size = 64;
  SigmaAggregation sigma = SigmaAggregation::kStdDev;
  std::size_t workers = 1;
};

struct SelectionResult {
  std::size_t chosen = 0;
  std::vector<double> scores;          // weighted mean loss per candidate
  Network model;                       // chosen candidate, masked, with its BN statistics
  Mask mask;
};

// Candidate network: `dense` with the candidate mask applied.
Network materialize(const Network& dense, const Candidate& cand);

// Full adaptive batch-norm selection across all clients' development sets.
SelectionResult adaptive_bn_select(const Network& dense, const std::vector<Candidate>& pool,
                                   std::span<const Dataset> dev_sets,
                                   const SelectionOptions& opts);

// Ablation: scores candidates with the BN statistics they inherited from `dense`.
SelectionResult vanilla_select(const Network& dense, const std::vector<Candidate>& pool,
                               std::span<const Dataset> dev_sets, const SelectionOptions& opts);

}  // namespace fedtiny
