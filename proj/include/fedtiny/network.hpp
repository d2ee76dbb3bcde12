#pragma once

#include <cstddef>
#include <cstdint>
#include <variant>
#include <vector>

#include "fedtiny/tensor.hpp"

namespace fedtiny {

// Batch-normalization state. `momentum` weights the previous moving value:
//   mean_t = momentum * mean_{t-1} + (1 - momentum) * batch_mean
// `scale`/`shift` are the affine parameters applied after normalization.
struct BNState {
  std::vector<double> mean;
  std::vector<double> var;
  std::vector<double> scale;
  std::vector<double> shift;
  double momentum = 0.9;
  double eps = 1e-5;

  static BNState identity(std::size_t features, double momentum = 0.9, double eps = 1e-5);
  std::size_t features() const noexcept { return mean.size(); }
  void validate() const;

  friend bool operator==(const BNState&, const BNState&) = default;
};

struct LinearLayer {
  Tensor weight;  // out x in
  Tensor bias;    // out
  bool prunable = true;

  std::size_t in_features() const noexcept { return weight.cols(); }
  std::size_t out_features() const noexcept { return weight.rows(); }

  friend bool operator==(const LinearLayer&, const LinearLayer&) = default;
};

struct BatchNormLayer {
  BNState state;
  friend bool operator==(const BatchNormLayer&, const BatchNormLayer&) = default;
};

struct ReluLayer {
  std::size_t width = 0;
  friend bool operator==(const ReluLayer&, const ReluLayer&) = default;
};

using Layer = std::variant<LinearLayer, BatchNormLayer, ReluLayer>;

struct MlpSpec {
  // widths.front() is the input dimension, widths.back() the class count.
  std::vector<std::size_t> widths;
  bool batch_norm = true;
  double bn_momentum = 0.9;
  double bn_eps = 1e-5;
  std::size_t blocks = 5;
};

// Gradients aligned with Network::layers(). For linear layers `weight`/`bias`
// hold dW/db; for batch norm they hold d(scale)/d(shift); activations are empty.
struct LayerGradients {
  Tensor weight;
  Tensor bias;
};
using Gradients = std::vector<LayerGradients>;

// Feed-forward chain of layers plus a contiguous block partition.
//
// The first and last linear layers are always prune-ineligible, as are all
// biases and batch-norm parameters. Only `LinearLayer::weight` of a layer with
// `prunable == true` is ever masked.
class Network {
 public:
  Network() = default;
  explicit Network(std::vector<Layer> layers, std::size_t block_count = 5);

  // Linear -> [BN] -> ReLU stages with He-normal weights and zero biases; the
  // final linear layer has no BN or activation.
  static Network mlp(const MlpSpec& spec, std::uint64_t seed);

  const std::vector<Layer>& layers() const noexcept { return layers_; }
  std::vector<Layer>& layers() noexcept { return layers_; }
  std::size_t size() const noexcept { return layers_.size(); }
  const Layer& layer(std::size_t i) const { return layers_.at(i); }
  Layer& layer(std::size_t i) { return layers_.at(i); }

  LinearLayer& linear(std::size_t i);
  const LinearLayer& linear(std::size_t i) const;
  BNState& bn(std::size_t i);
  const BNState& bn(std::size_t i) const;

  std::size_t input_dim() const;
  std::size_t output_dim() const;

  const std::vector<std::vector<std::size_t>>& blocks() const noexcept { return blocks_; }
  void set_blocks(std::vector<std::vector<std::size_t>> blocks);
  std::size_t block_of(std::size_t layer) const;

  std::vector<std::size_t> prunable_layers() const;
  std::vector<std::size_t> linear_layers() const;
  std::vector<std::size_t> bn_layers() const;

  std::size_t parameter_count() const;
  std::size_t eligible_parameter_count() const;

  Gradients zero_gradients() const;

  friend bool operator==(const Network&, const Network&) = default;

 private:
  void validate() const;

  std::vector<Layer> layers_;
  std::vector<std::vector<std::size_t>> blocks_;
};

// Contiguous, equal-as-possible partition of `layers` items into
// min(count, layers) blocks; earlier blocks take the remainder.
std::vector<std::vector<std::size_t>> even_blocks(std::size_t layers, std::size_t count);

}  // namespace fedtiny
