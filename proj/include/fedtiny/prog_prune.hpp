#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fedtiny/mask.hpp"
#include "fedtiny/network.hpp"
#include "fedtiny/topk_buffer.hpp"

namespace fedtiny {

enum class Granularity { kLayer, kBlock, kEntire };
enum class BlockOrder { kBackward, kForward };

std::string to_string(Granularity g);
std::string to_string(BlockOrder o);
Granularity parse_granularity(const std::string& s);
BlockOrder parse_block_order(const std::string& s);

struct PruneSchedule {
  Granularity granularity = Granularity::kBlock;
  BlockOrder order = BlockOrder::kBackward;
  std::size_t interval = 10;     // rounds between adjustments (ΔR)
  std::size_t stop_round = 100;  // last round that may adjust (R_stop)
  double beta = 0.15;

  void validate() const;
  friend bool operator==(const PruneSchedule&, const PruneSchedule&) = default;
};

// Rounds are 1-based; adjustments happen when round % interval == 0 and
// round <= stop_round.
bool is_pruning_round(std::size_t round, const PruneSchedule& schedule);

struct PruningNumber {
  std::size_t count = 0;
  bool clamped = false;  // cosine count exceeded the pruned or unpruned count
};

// a = floor(beta * (1 + cos(t*pi / (stop_round * E))) * unpruned) for a
// targeted layer with t <= stop_round * E, else 0; capped at both `unpruned`
// and `pruned`.
PruningNumber pruning_number(std::size_t t, std::size_t local_iterations,
                             const PruneSchedule& schedule, std::size_t unpruned,
                             std::size_t pruned, bool targeted = true);

// Prunable layers adjusted in `round`; empty on non-pruning rounds. Block and
// Layer granularity cycle through blocks/layers that hold a prunable layer.
std::vector<std::size_t> target_layers(std::size_t round, const PruneSchedule& schedule,
                                       const Network& net);

// Streams the gradients of the pruned coordinates (mask bit 0) of one layer
// through a TopKBuffer of capacity `a`.
TopKBuffer topk_collect(std::span<const double> layer_grad, const LayerMask& mask, std::size_t a);

// Same, over explicit (index, gradient) pairs.
TopKBuffer topk_collect(std::span<const GradEntry> grads, std::size_t a);

// Weighted sum over the union of reported indices, sorted by index. Weights are
// normalized to sum to 1.
std::vector<GradEntry> aggregate_topk(std::span<const std::vector<GradEntry>> client_entries,
                                      std::span<const double> client_weights);

struct GrowPrunePlan {
  std::size_t layer = 0;
  std::vector<std::size_t> grow;
  std::vector<std::size_t> drop;
  std::size_t filled = 0;  // grow slots filled with the lowest unreported pruned indices
};

// grow = the a highest-ranked aggregated gradients over pruned coordinates;
// drop = the a unpruned coordinates with the smallest |weight| (lower index
// first on ties).
GrowPrunePlan plan_grow_prune(const LayerMask& mask, std::span<const double> weights,
                              std::span<const GradEntry> aggregated, std::size_t a);

// Flips grow bits to 1 and drop bits to 0; grown and dropped weights are set to 0.
void apply_plan(Mask& mask, Network& net, const GrowPrunePlan& plan);

}  // namespace fedtiny
