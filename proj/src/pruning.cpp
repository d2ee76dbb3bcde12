#include "fedtiny/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "fedtiny/error.hpp"
#include "fedtiny/rng.hpp"

namespace fedtiny {

std::vector<std::uint8_t> magnitude_keep(std::span<const double> weights, std::size_t keep) {
  const auto n = weights.size();
  std::vector<std::uint8_t> bits(n, 0);
  keep = std::min(keep, n);
  if (keep == 0) return bits;
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  const auto stronger = [&](std::size_t a, std::size_t b) {
    const double ma = std::abs(weights[a]), mb = std::abs(weights[b]);
    return ma != mb ? ma > mb : a < b;
  };
  std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(keep - 1), idx.end(),
                   stronger);
  for (std::size_t i = 0; i < keep; ++i) bits[idx[i]] = 1;
  return bits;
}

std::vector<std::uint8_t> magnitude_prune_layer(std::span<const double> weights, double density) {
  return magnitude_keep(weights, kept_count(density, weights.size()));
}

Mask magnitude_mask(const Network& net, std::span<const double> layer_densities) {
  Mask mask = Mask::zeros(net);
  require(layer_densities.size() == mask.layers().size(), ErrorCode::kShapeMismatch,
          "one density per prunable layer required");
  for (std::size_t k = 0; k < mask.layers().size(); ++k) {
    auto& lm = mask.layers()[k];
    lm.bits = magnitude_prune_layer(net.linear(lm.layer).weight.values(), layer_densities[k]);
  }
  return mask;
}

Mask random_mask(const Network& net, std::span<const double> layer_densities, std::uint64_t seed) {
  Mask mask = Mask::zeros(net);
  require(layer_densities.size() == mask.layers().size(), ErrorCode::kShapeMismatch,
          "one density per prunable layer required");
  Rng rng(derive_seed(seed, {0x7a4d}));
  for (std::size_t k = 0; k < mask.layers().size(); ++k) {
    auto& lm = mask.layers()[k];
    const auto keep = kept_count(layer_densities[k], lm.size());
    std::vector<std::size_t> idx(lm.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t i = 0; i < keep; ++i) lm.bits[idx[i]] = 1;
  }
  return mask;
}

Mask random_mask(const Network& net, double density, std::uint64_t seed) {
  require(density > 0.0 && density <= 1.0, ErrorCode::kInvalidArgument,
          "random mask density must lie in (0, 1]");
  const std::vector<double> d(net.prunable_layers().size(), density);
  return random_mask(net, d, seed);
}

namespace {

std::vector<std::size_t> eligible_sizes(const Network& net) {
  std::vector<std::size_t> n;
  for (auto i : net.prunable_layers()) n.push_back(net.linear(i).weight.size());
  return n;
}

}  // namespace

std::vector<double> feasible_uniform_densities(const Network& net, double target) {
  require(target > 0.0 && target <= 1.0, ErrorCode::kInvalidArgument,
          "target density must lie in (0, 1]");
  const auto sizes = eligible_sizes(net);
  const auto total = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
  const auto budget = density_budget(target, total);
  std::vector<std::size_t> counts(sizes.size());
  std::size_t used = 0;
  for (std::size_t k = 0; k < sizes.size(); ++k) used += counts[k] = kept_count(target, sizes[k]);
  if (used > budget) {
    // Proportional share of the budget, remainder to the largest fractions.
    std::vector<double> frac(sizes.size());
    used = 0;
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      const double share = static_cast<double>(budget) * static_cast<double>(sizes[k]) /
                           static_cast<double>(total);
      counts[k] = static_cast<std::size_t>(std::floor(share));
      frac[k] = share - static_cast<double>(counts[k]);
      used += counts[k];
    }
    std::vector<std::size_t> order(sizes.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
    for (std::size_t i = 0; used < budget && i < order.size(); ++i) {
      if (counts[order[i]] < sizes[order[i]]) {
        ++counts[order[i]];
        ++used;
      }
    }
  }
  std::vector<double> d(sizes.size());
  for (std::size_t k = 0; k < sizes.size(); ++k)
    d[k] = static_cast<double>(counts[k]) / static_cast<double>(sizes[k]);
  return d;
}

std::vector<Candidate> generate_candidate_pool(const Network& dense, double d_target,
                                               std::size_t pool_size, const PoolOptions& opts,
                                               std::uint64_t seed) {
  require(pool_size >= 1, ErrorCode::kInvalidArgument, "candidate pool size must be at least 1");
  require(d_target > 0.0 && d_target <= 1.0, ErrorCode::kInvalidArgument,
          "target density must lie in (0, 1]");
  require(opts.noise >= 0.0, ErrorCode::kInvalidArgument, "noise scale must be non-negative");
  const auto layers = dense.prunable_layers();
  require(!layers.empty(), ErrorCode::kInvalidArgument, "network has no prunable layers");
  const auto sizes = eligible_sizes(dense);
  const auto total = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
  const auto budget = density_budget(d_target, total);
  const double half_width = opts.noise * d_target;

  std::vector<Candidate> pool;
  pool.reserve(pool_size);
  for (std::size_t c = 0; c < pool_size; ++c) {
    Rng rng(derive_seed(seed, {0xca9d, c}));
    std::uniform_real_distribution<double> noise(-half_width, half_width);
    std::vector<double> d(sizes.size());
    std::vector<std::size_t> counts(sizes.size());
    bool accepted = false;
    for (std::size_t attempt = 0; attempt < opts.max_attempts && !accepted; ++attempt) {
      std::size_t used = 0;
      for (std::size_t k = 0; k < sizes.size(); ++k) {
        const double floor_d =
            std::min(1.0, static_cast<double>(opts.min_survivors) / static_cast<double>(sizes[k]));
        const double e = half_width > 0.0 ? noise(rng) : 0.0;
        d[k] = std::clamp(d_target + e, floor_d, 1.0);
        used += counts[k] = kept_count(d[k], sizes[k]);
      }
      accepted = used <= budget;
    }
    bool rescaled = false;
    if (!accepted) {
      require(opts.allow_rescale, ErrorCode::kExhausted,
              "no feasible candidate after " + std::to_string(opts.max_attempts) + " draws");
      double mass = 0.0;
      for (std::size_t k = 0; k < sizes.size(); ++k) mass += d[k] * static_cast<double>(sizes[k]);
      const double s = static_cast<double>(budget) / mass;
      for (std::size_t k = 0; k < sizes.size(); ++k) {
        d[k] *= s;
        counts[k] = std::min(sizes[k], static_cast<std::size_t>(
                                           std::floor(d[k] * static_cast<double>(sizes[k]))));
      }
      rescaled = true;
    }

    Candidate cand;
    cand.id = c;
    cand.requested_densities = d;
    cand.mask = Mask::zeros(dense);
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      auto& lm = cand.mask.layers()[k];
      lm.bits = magnitude_keep(dense.linear(lm.layer).weight.values(), counts[k]);
      cand.layer_densities.push_back(static_cast<double>(counts[k]) /
                                     static_cast<double>(sizes[k]));
    }
    cand.density = cand.mask.density();
    cand.rescaled = rescaled;
    pool.push_back(std::move(cand));
  }
  return pool;
}

std::size_t auto_pool_size(double d_target) {
  require(d_target > 0.0 && d_target <= 1.0, ErrorCode::kInvalidArgument,
          "target density must lie in (0, 1]");
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(0.1 / d_target)));
}

}  // namespace fedtiny
