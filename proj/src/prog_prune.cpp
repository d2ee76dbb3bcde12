#include "fedtiny/prog_prune.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include "fedtiny/error.hpp"

namespace fedtiny {

std::string to_string(Granularity g) {
  switch (g) {
    case Granularity::kLayer: return "layer";
    case Granularity::kBlock: return "block";
    case Granularity::kEntire: return "entire";
  }
  return "?";
}

std::string to_string(BlockOrder o) { return o == BlockOrder::kBackward ? "backward" : "forward"; }

Granularity parse_granularity(const std::string& s) {
  if (s == "layer") return Granularity::kLayer;
  if (s == "block") return Granularity::kBlock;
  if (s == "entire") return Granularity::kEntire;
  fail(ErrorCode::kParse, "unknown granularity '" + s + "' (layer|block|entire)");
}

BlockOrder parse_block_order(const std::string& s) {
  if (s == "backward") return BlockOrder::kBackward;
  if (s == "forward") return BlockOrder::kForward;
  fail(ErrorCode::kParse, "unknown block order '" + s + "' (backward|forward)");
}

void PruneSchedule::validate() const {
  require(interval >= 1, ErrorCode::kInvalidArgument, "pruning interval must be at least 1");
  require(stop_round >= interval, ErrorCode::kInvalidArgument,
          "pruning stop round must be at least the interval");
  require(beta > 0.0 && beta < 1.0, ErrorCode::kInvalidArgument, "beta must lie in (0, 1)");
}

bool is_pruning_round(std::size_t round, const PruneSchedule& schedule) {
  return round >= 1 && round % schedule.interval == 0 && round <= schedule.stop_round;
}

PruningNumber pruning_number(std::size_t t, std::size_t local_iterations,
                             const PruneSchedule& schedule, std::size_t unpruned,
                             std::size_t pruned, bool targeted) {
  require(local_iterations >= 1, ErrorCode::kInvalidArgument, "local iterations must be >= 1");
  const double horizon = static_cast<double>(schedule.stop_round * local_iterations);
  if (!targeted || static_cast<double>(t) > horizon) return {};
  const double x = schedule.beta *
                   (1.0 + std::cos(static_cast<double>(t) * std::numbers::pi / horizon)) *
                   static_cast<double>(unpruned);
  // Absorb rounding just below an exact integer.
  const auto raw = static_cast<std::size_t>(std::floor(x + 1e-9));
  const auto cap = std::min(unpruned, pruned);
  return {std::min(raw, cap), raw > cap};
}

std::vector<std::size_t> target_layers(std::size_t round, const PruneSchedule& schedule,
                                       const Network& net) {
  require(round >= 1, ErrorCode::kInvalidArgument, "rounds are numbered from 1");
  if (!is_pruning_round(round, schedule)) return {};
  const auto eligible = net.prunable_layers();
  if (schedule.granularity == Granularity::kEntire || eligible.empty()) return eligible;

  const std::size_t step = round / schedule.interval - 1;
  if (schedule.granularity == Granularity::kLayer) {
    auto order = eligible;
    if (schedule.order == BlockOrder::kBackward) std::reverse(order.begin(), order.end());
    return {order[step % order.size()]};
  }

  std::vector<std::vector<std::size_t>> cycle;
  for (const auto& block : net.blocks()) {
    std::vector<std::size_t> members;
    for (auto i : block)
      if (std::find(eligible.begin(), eligible.end(), i) != eligible.end()) members.push_back(i);
    if (!members.empty()) cycle.push_back(std::move(members));
  }
  if (schedule.order == BlockOrder::kBackward) std::reverse(cycle.begin(), cycle.end());
  return cycle[step % cycle.size()];
}

TopKBuffer topk_collect(std::span<const double> layer_grad, const LayerMask& mask, std::size_t a) {
  require(layer_grad.size() == mask.size(), ErrorCode::kShapeMismatch,
          "gradient and mask sizes differ");
  TopKBuffer buf(a);
  for (std::size_t i = 0; i < layer_grad.size(); ++i)
    if (!mask.bits[i]) buf.push(i, layer_grad[i]);
  return buf;
}

TopKBuffer topk_collect(std::span<const GradEntry> grads, std::size_t a) {
  TopKBuffer buf(a);
  for (const auto& g : grads) buf.push(g.index, g.value);
  return buf;
}

std::vector<GradEntry> aggregate_topk(std::span<const std::vector<GradEntry>> client_entries,
                                      std::span<const double> client_weights) {
  require(!client_entries.empty(), ErrorCode::kInvalidArgument, "no client buffers to aggregate");
  require(client_entries.size() == client_weights.size(), ErrorCode::kInvalidArgument,
          "need one weight per client buffer");
  double total = 0.0;
  for (double w : client_weights) {
    require(w >= 0.0 && std::isfinite(w), ErrorCode::kInvalidArgument,
            "client weights must be finite and non-negative");
    total += w;
  }
  require(total > 0.0, ErrorCode::kInvalidArgument, "client weights sum to zero");
  std::map<std::size_t, double> acc;
  for (std::size_t k = 0; k < client_entries.size(); ++k) {
    const double w = client_weights[k] / total;
    for (const auto& e : client_entries[k]) acc[e.index] += w * e.value;
  }
  std::vector<GradEntry> out;
  out.reserve(acc.size());
  for (auto [i, v] : acc) out.push_back({i, v});
  return out;
}

GrowPrunePlan plan_grow_prune(const LayerMask& mask, std::span<const double> weights,
                              std::span<const GradEntry> aggregated, std::size_t a) {
  require(weights.size() == mask.size(), ErrorCode::kShapeMismatch,
          "weight and mask sizes differ");
  const auto unpruned = mask.nnz(), pruned = mask.size() - unpruned;
  require(a <= std::min(pruned, unpruned), ErrorCode::kInvalidArgument,
          "pruning number exceeds the pruned or unpruned count of layer " +
              std::to_string(mask.layer));
  GrowPrunePlan plan;
  plan.layer = mask.layer;
  if (a == 0) return plan;

  std::vector<GradEntry> reported;
  for (const auto& e : aggregated) {
    require(e.index < mask.size(), ErrorCode::kInvalidArgument, "gradient index out of range");
    if (!mask.bits[e.index]) reported.push_back(e);
  }
  std::sort(reported.begin(), reported.end(), ranks_above);
  std::vector<std::uint8_t> chosen(mask.size(), 0);
  for (std::size_t i = 0; i < reported.size() && plan.grow.size() < a; ++i) {
    if (chosen[reported[i].index]) continue;
    chosen[reported[i].index] = 1;
    plan.grow.push_back(reported[i].index);
  }
  for (std::size_t i = 0; i < mask.size() && plan.grow.size() < a; ++i) {
    if (mask.bits[i] || chosen[i]) continue;
    chosen[i] = 1;
    plan.grow.push_back(i);
    ++plan.filled;
  }

  std::vector<std::size_t> kept;
  kept.reserve(unpruned);
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask.bits[i]) kept.push_back(i);
  const auto weaker = [&](std::size_t x, std::size_t y) {
    const double mx = std::abs(weights[x]), my = std::abs(weights[y]);
    return mx != my ? mx < my : x < y;
  };
  std::partial_sort(kept.begin(), kept.begin() + static_cast<std::ptrdiff_t>(a), kept.end(), weaker);
  plan.drop.assign(kept.begin(), kept.begin() + static_cast<std::ptrdiff_t>(a));
  return plan;
}

void apply_plan(Mask& mask, Network& net, const GrowPrunePlan& plan) {
  LayerMask* lm = mask.find(plan.layer);
  require(lm != nullptr, ErrorCode::kInvalidArgument,
          "plan targets layer " + std::to_string(plan.layer) + " which has no mask");
  require(plan.grow.size() == plan.drop.size(), ErrorCode::kInvalidArgument,
          "grow and drop sets differ in size");
  auto& w = net.linear(plan.layer).weight;
  require(w.size() == lm->size(), ErrorCode::kShapeMismatch, "mask does not match layer weights");
  std::vector<std::uint8_t> touched(lm->size(), 0);
  for (auto i : plan.grow) {
    require(i < lm->size() && !lm->bits[i] && !touched[i], ErrorCode::kInvalidArgument,
            "grow index " + std::to_string(i) + " is not a distinct pruned coordinate");
    touched[i] = 1;
  }
  for (auto i : plan.drop) {
    require(i < lm->size() && lm->bits[i] && !touched[i], ErrorCode::kInvalidArgument,
            "drop index " + std::to_string(i) + " is not a distinct unpruned coordinate");
    touched[i] = 1;
  }
  for (auto i : plan.grow) {
    lm->bits[i] = 1;
    w[i] = 0.0;
  }
  for (auto i : plan.drop) {
    lm->bits[i] = 0;
    w[i] = 0.0;
  }
}

}  // namespace fedtiny
