#include "fedtiny/network.hpp"

#include <cmath>

#include "fedtiny/error.hpp"
#include "fedtiny/rng.hpp"

namespace fedtiny {

BNState BNState::identity(std::size_t features, double momentum, double eps) {
  BNState s;
  s.mean.assign(features, 0.0);
  s.var.assign(features, 1.0);
  s.scale.assign(features, 1.0);
  s.shift.assign(features, 0.0);
  s.momentum = momentum;
  s.eps = eps;
  s.validate();
  return s;
}

void BNState::validate() const {
  const auto n = mean.size();
  require(n > 0 && var.size() == n && scale.size() == n && shift.size() == n,
          ErrorCode::kShapeMismatch, "batch-norm state vectors must share one non-zero length");
  require(momentum > 0.0 && momentum < 1.0, ErrorCode::kInvalidArgument,
          "batch-norm momentum must lie in (0, 1)");
  require(eps > 0.0, ErrorCode::kInvalidArgument, "batch-norm epsilon must be positive");
  for (double v : var)
    require(v >= 0.0, ErrorCode::kInvalidArgument, "batch-norm variance must be non-negative");
}

std::vector<std::vector<std::size_t>> even_blocks(std::size_t layers, std::size_t count) {
  require(count > 0, ErrorCode::kInvalidArgument, "block count must be positive");
  std::vector<std::vector<std::size_t>> blocks;
  if (layers == 0) return blocks;
  const std::size_t k = std::min(count, layers);
  const std::size_t base = layers / k, extra = layers % k;
  std::size_t next = 0;
  for (std::size_t b = 0; b < k; ++b) {
    const std::size_t len = base + (b < extra ? 1 : 0);
    std::vector<std::size_t> ids;
    for (std::size_t i = 0; i < len; ++i) ids.push_back(next++);
    blocks.push_back(std::move(ids));
  }
  return blocks;
}

Network::Network(std::vector<Layer> layers, std::size_t block_count) : layers_(std::move(layers)) {
  require(!layers_.empty(), ErrorCode::kInvalidArgument, "network needs at least one layer");
  const auto lin = linear_layers();
  require(!lin.empty(), ErrorCode::kInvalidArgument, "network needs at least one linear layer");
  linear(lin.front()).prunable = false;
  linear(lin.back()).prunable = false;
  blocks_ = even_blocks(layers_.size(), block_count);
  validate();
}

Network Network::mlp(const MlpSpec& spec, std::uint64_t seed) {
  require(spec.widths.size() >= 2, ErrorCode::kInvalidArgument,
          "MLP needs an input width and an output width");
  Rng rng(derive_seed(seed, {0x6d6c70}));
  std::vector<Layer> layers;
  for (std::size_t i = 0; i + 1 < spec.widths.size(); ++i) {
    const auto in = spec.widths[i], out = spec.widths[i + 1];
    require(in > 0 && out > 0, ErrorCode::kInvalidArgument, "MLP widths must be positive");
    LinearLayer lin{Tensor::matrix(out, in), Tensor::vector(out), true};
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(in)));
    for (auto& w : lin.weight.values()) w = dist(rng);
    layers.emplace_back(std::move(lin));
    if (i + 2 < spec.widths.size()) {
      if (spec.batch_norm)
        layers.emplace_back(BatchNormLayer{BNState::identity(out, spec.bn_momentum, spec.bn_eps)});
      layers.emplace_back(ReluLayer{out});
    }
  }
  return Network(std::move(layers), spec.blocks);
}

LinearLayer& Network::linear(std::size_t i) {
  auto* p = std::get_if<LinearLayer>(&layers_.at(i));
  require(p != nullptr, ErrorCode::kInvalidArgument, "layer " + std::to_string(i) + " is not linear");
  return *p;
}

const LinearLayer& Network::linear(std::size_t i) const {
  auto* p = std::get_if<LinearLayer>(&layers_.at(i));
  require(p != nullptr, ErrorCode::kInvalidArgument, "layer " + std::to_string(i) + " is not linear");
  return *p;
}

BNState& Network::bn(std::size_t i) {
  auto* p = std::get_if<BatchNormLayer>(&layers_.at(i));
  require(p != nullptr, ErrorCode::kInvalidArgument,
          "layer " + std::to_string(i) + " is not batch norm");
  return p->state;
}

const BNState& Network::bn(std::size_t i) const {
  auto* p = std::get_if<BatchNormLayer>(&layers_.at(i));
  require(p != nullptr, ErrorCode::kInvalidArgument,
          "layer " + std::to_string(i) + " is not batch norm");
  return p->state;
}

std::size_t Network::input_dim() const { return linear(linear_layers().front()).in_features(); }

std::size_t Network::output_dim() const { return linear(linear_layers().back()).out_features(); }

void Network::set_blocks(std::vector<std::vector<std::size_t>> blocks) {
  std::vector<std::size_t> expect;
  for (const auto& b : blocks) {
    require(!b.empty(), ErrorCode::kInvalidArgument, "blocks must be non-empty");
    for (auto i : b) expect.push_back(i);
  }
  require(expect.size() == layers_.size(), ErrorCode::kInvalidArgument,
          "blocks must cover every layer exactly once");
  for (std::size_t i = 0; i < expect.size(); ++i)
    require(expect[i] == i, ErrorCode::kInvalidArgument,
            "blocks must be contiguous and ordered from input to output");
  blocks_ = std::move(blocks);
}

std::size_t Network::block_of(std::size_t layer) const {
  for (std::size_t b = 0; b < blocks_.size(); ++b)
    for (auto i : blocks_[b])
      if (i == layer) return b;
  fail(ErrorCode::kInvalidArgument, "layer " + std::to_string(layer) + " is in no block");
}

std::vector<std::size_t> Network::prunable_layers() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < layers_.size(); ++i)
    if (auto* p = std::get_if<LinearLayer>(&layers_[i]); p && p->prunable) out.push_back(i);
  return out;
}

std::vector<std::size_t> Network::linear_layers() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < layers_.size(); ++i)
    if (std::holds_alternative<LinearLayer>(layers_[i])) out.push_back(i);
  return out;
}

std::vector<std::size_t> Network::bn_layers() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < layers_.size(); ++i)
    if (std::holds_alternative<BatchNormLayer>(layers_[i])) out.push_back(i);
  return out;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) {
    if (auto* lin = std::get_if<LinearLayer>(&l)) n += lin->weight.size() + lin->bias.size();
    if (auto* bn = std::get_if<BatchNormLayer>(&l)) n += 2 * bn->state.features();
  }
  return n;
}

std::size_t Network::eligible_parameter_count() const {
  std::size_t n = 0;
  for (auto i : prunable_layers()) n += linear(i).weight.size();
  return n;
}

Gradients Network::zero_gradients() const {
  Gradients g(layers_.size());
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (auto* lin = std::get_if<LinearLayer>(&layers_[i])) {
      g[i].weight = Tensor(lin->weight.shape());
      g[i].bias = Tensor(lin->bias.shape());
    } else if (auto* bn = std::get_if<BatchNormLayer>(&layers_[i])) {
      g[i].weight = Tensor::vector(bn->state.features());
      g[i].bias = Tensor::vector(bn->state.features());
    }
  }
  return g;
}

void Network::validate() const {
  std::size_t width = 0;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    const auto where = "layer " + std::to_string(i);
    if (auto* lin = std::get_if<LinearLayer>(&l)) {
      require(lin->weight.rank() == 2 && lin->bias.rank() == 1 &&
                  lin->bias.size() == lin->weight.rows(),
              ErrorCode::kShapeMismatch, where + ": linear weight/bias shapes disagree");
      require(width == 0 || width == lin->in_features(), ErrorCode::kShapeMismatch,
              where + ": linear input width does not match previous layer");
      width = lin->out_features();
    } else if (auto* bn = std::get_if<BatchNormLayer>(&l)) {
      bn->state.validate();
      require(width == bn->state.features(), ErrorCode::kShapeMismatch,
              where + ": batch-norm width does not match previous layer");
    } else {
      const auto& relu = std::get<ReluLayer>(l);
      require(width == relu.width, ErrorCode::kShapeMismatch,
              where + ": activation width does not match previous layer");
    }
  }
}

}  // namespace fedtiny
