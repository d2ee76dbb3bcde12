#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "fedtiny/network.hpp"

namespace fedtiny {

// Binary keep-mask over one prunable linear weight, same row-major layout.
struct LayerMask {
  std::size_t layer = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> bits;

  std::size_t size() const noexcept { return bits.size(); }
  std::size_t nnz() const noexcept;
  double density() const noexcept;

  friend bool operator==(const LayerMask&, const LayerMask&) = default;
};

// One LayerMask per prunable layer of a network, ordered by layer index.
// A default-constructed (empty) mask means "no masking" (dense training).
class Mask {
 public:
  Mask() = default;
  explicit Mask(std::vector<LayerMask> layers);

  static Mask ones(const Network& net);
  static Mask zeros(const Network& net);
  // Mask reflecting the current nonzero pattern of the prunable weights.
  static Mask from_nonzeros(const Network& net);

  bool empty() const noexcept { return layers_.empty(); }
  const std::vector<LayerMask>& layers() const noexcept { return layers_; }
  std::vector<LayerMask>& layers() noexcept { return layers_; }

  LayerMask* find(std::size_t layer) noexcept;
  const LayerMask* find(std::size_t layer) const noexcept;

  std::size_t nnz() const noexcept;
  std::size_t size() const noexcept;
  // nnz / size over eligible tensors; 1.0 for an empty mask.
  double density() const noexcept;

  // Throws unless every LayerMask matches a prunable layer's weight shape.
  void check_compatible(const Network& net) const;

  friend bool operator==(const Mask&, const Mask&) = default;

 private:
  std::vector<LayerMask> layers_;
};

inline double density(const Mask& mask) { return mask.density(); }

// Zeroes the masked-out weights of every prunable layer.
void apply_mask(Network& net, const Mask& mask);

// Largest nonzero count m with m / total <= target (exact in floating point).
std::size_t density_budget(double target, std::size_t total);

// ceil(d * n) with tolerance for representation error in d, clamped to [0, n].
std::size_t kept_count(double d, std::size_t n);

}  // namespace fedtiny
