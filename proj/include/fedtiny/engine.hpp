#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fedtiny/mask.hpp"
#include "fedtiny/network.hpp"

namespace fedtiny {

enum class Mode { kTrain, kEval };

// Per-layer values saved by forward() for backward().
struct ForwardCache {
  Mode mode = Mode::kEval;
  std::size_t batch = 0;
  std::vector<Tensor> inputs;        // input of layer i
  std::vector<Tensor> bn_xhat;       // normalized input, batch-norm layers only
  std::vector<std::vector<double>> bn_inv_std;
  Tensor output;

  bool valid_for(const Network& net) const noexcept {
    return batch > 0 && inputs.size() == net.size();
  }
  // Number of activation values held: every layer output of the pass.
  std::size_t activation_values() const noexcept;
};

struct LossValue {
  double value = 0.0;
  std::size_t count = 0;
};

struct LossAndGrad {
  LossValue loss;
  Tensor grad;  // d(mean loss)/d(output)
};

// Full forward pass over a (batch x input_dim) tensor.
//
// Train mode normalizes with batch statistics and folds them into the moving
// statistics of every batch-norm layer (requires batch >= 2). Eval mode uses
// the stored statistics and never writes to `net`.
Tensor forward(Network& net, const Tensor& batch, Mode mode, ForwardCache* cache = nullptr);

// Eval-mode forward on an immutable network.
Tensor infer(const Network& net, const Tensor& batch, ForwardCache* cache = nullptr);

// Mean softmax cross-entropy over the batch.
LossAndGrad softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

// Mean over the batch of 0.5 * ||output - target||^2.
LossAndGrad squared_error(const Tensor& output, const Tensor& target);

// Reverse-mode pass from d(loss)/d(output). When `only_layers` is non-empty,
// parameter gradients are produced for those layers only (others stay zero)
// and propagation stops below the lowest requested layer.
Gradients backward_from(const Network& net, const ForwardCache& cache, const Tensor& grad_output,
                        std::span<const std::size_t> only_layers = {});

struct BackwardResult {
  LossValue loss;
  Gradients grads;
};

BackwardResult backward(const Network& net, const Tensor& logits, std::span<const int> labels,
                        const ForwardCache& cache);

// theta <- theta - lr * (grad ⊙ mask) on prunable weights; every other
// parameter takes a dense step. Masked-out weights are left at exactly zero.
void sgd_step(Network& net, const Gradients& grads, const Mask& mask, double lr);

}  // namespace fedtiny
