#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fedtiny/mask.hpp"
#include "fedtiny/network.hpp"

namespace fedtiny {

// Keep the kept_count(density, n) largest-|w| entries; on equal magnitude the
// lower flat index is kept first.
std::vector<std::uint8_t> magnitude_prune_layer(std::span<const double> weights, double density);

// Same, with an explicit survivor count.
std::vector<std::uint8_t> magnitude_keep(std::span<const double> weights, std::size_t keep);

// Per-layer magnitude mask over every prunable layer of `net`.
Mask magnitude_mask(const Network& net, std::span<const double> layer_densities);

// Uniformly random support of kept_count(d, n) entries per layer.
Mask random_mask(const Network& net, double density, std::uint64_t seed);
Mask random_mask(const Network& net, std::span<const double> layer_densities, std::uint64_t seed);

// Per-layer densities as close to uniform `target` as possible whose kept
// counts never exceed the global density budget.
std::vector<double> feasible_uniform_densities(const Network& net, double target);

struct Candidate {
  std::size_t id = 0;
  std::vector<double> requested_densities;  // d^l after clamping (and rescale)
  std::vector<double> layer_densities;      // realized nnz / n^l, one per prunable layer
  Mask mask;
  double density = 0.0;
  bool rescaled = false;  // produced by the proportional-rescale fallback
};

struct PoolOptions {
  double noise = 0.5;  // noise half-width as a fraction of d_target
  // Per-layer floor: min_survivors / n^l (capped at 1).
  std::size_t min_survivors = 10;
  std::size_t max_attempts = 200;
  bool allow_rescale = true;
};

// Uniform-noise candidate pool. Each candidate draws
//   d^l = clamp(d_target + e^l, d_min^l, 1),  e^l ~ U[-noise*d_target, +noise*d_target]
// and magnitude-prunes every prunable layer of `dense` at d^l. Draws whose total
// density exceeds d_target are redrawn; after `max_attempts` the last draw is
// scaled down proportionally until it fits.
std::vector<Candidate> generate_candidate_pool(const Network& dense, double d_target,
                                               std::size_t pool_size, const PoolOptions& opts,
                                               std::uint64_t seed);

// Accuracy/communication trade-off pool size C* = round(0.1 / d_target), at least 1.
std::size_t auto_pool_size(double d_target);

}  // namespace fedtiny
