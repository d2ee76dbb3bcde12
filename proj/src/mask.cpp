#include "fedtiny/mask.hpp"

#include <algorithm>
#include <cmath>

#include "fedtiny/error.hpp"

namespace fedtiny {

std::size_t LayerMask::nnz() const noexcept {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

double LayerMask::density() const noexcept {
  return bits.empty() ? 1.0 : static_cast<double>(nnz()) / static_cast<double>(bits.size());
}

Mask::Mask(std::vector<LayerMask> layers) : layers_(std::move(layers)) {
  std::sort(layers_.begin(), layers_.end(),
            [](const LayerMask& a, const LayerMask& b) { return a.layer < b.layer; });
  for (const auto& lm : layers_) {
    require(lm.bits.size() == lm.rows * lm.cols, ErrorCode::kShapeMismatch,
            "layer mask size does not match its shape");
    for (auto b : lm.bits)
      require(b <= 1, ErrorCode::kInvalidArgument, "mask entries must be 0 or 1");
  }
}

static Mask filled(const Network& net, std::uint8_t v) {
  std::vector<LayerMask> out;
  for (auto i : net.prunable_layers()) {
    const auto& w = net.linear(i).weight;
    out.push_back(LayerMask{i, w.rows(), w.cols(), std::vector<std::uint8_t>(w.size(), v)});
  }
  return Mask(std::move(out));
}

Mask Mask::ones(const Network& net) { return filled(net, 1); }
Mask Mask::zeros(const Network& net) { return filled(net, 0); }

Mask Mask::from_nonzeros(const Network& net) {
  Mask m = zeros(net);
  for (auto& lm : m.layers_) {
    const auto& w = net.linear(lm.layer).weight;
    for (std::size_t j = 0; j < w.size(); ++j) lm.bits[j] = w[j] != 0.0 ? 1 : 0;
  }
  return m;
}

LayerMask* Mask::find(std::size_t layer) noexcept {
  for (auto& lm : layers_)
    if (lm.layer == layer) return &lm;
  return nullptr;
}

const LayerMask* Mask::find(std::size_t layer) const noexcept {
  for (const auto& lm : layers_)
    if (lm.layer == layer) return &lm;
  return nullptr;
}

std::size_t Mask::nnz() const noexcept {
  std::size_t n = 0;
  for (const auto& lm : layers_) n += lm.nnz();
  return n;
}

std::size_t Mask::size() const noexcept {
  std::size_t n = 0;
  for (const auto& lm : layers_) n += lm.size();
  return n;
}

double Mask::density() const noexcept {
  const auto n = size();
  return n == 0 ? 1.0 : static_cast<double>(nnz()) / static_cast<double>(n);
}

void Mask::check_compatible(const Network& net) const {
  if (empty()) return;
  const auto eligible = net.prunable_layers();
  require(eligible.size() == layers_.size(), ErrorCode::kShapeMismatch,
          "mask covers " + std::to_string(layers_.size()) + " layers, network has " +
              std::to_string(eligible.size()) + " prunable layers");
  for (std::size_t k = 0; k < eligible.size(); ++k) {
    const auto& w = net.linear(eligible[k]).weight;
    const auto& lm = layers_[k];
    require(lm.layer == eligible[k] && lm.rows == w.rows() && lm.cols == w.cols() &&
                lm.bits.size() == w.size(),
            ErrorCode::kShapeMismatch,
            "mask for layer " + std::to_string(lm.layer) + " does not match the network");
  }
}

void apply_mask(Network& net, const Mask& mask) {
  mask.check_compatible(net);
  for (const auto& lm : mask.layers()) {
    auto& w = net.linear(lm.layer).weight;
    for (std::size_t j = 0; j < lm.bits.size(); ++j)
      if (!lm.bits[j]) w[j] = 0.0;
  }
}

std::size_t density_budget(double target, std::size_t total) {
  require(target >= 0.0 && target <= 1.0, ErrorCode::kInvalidArgument,
          "density must lie in [0, 1]");
  if (total == 0) return 0;
  const double t = static_cast<double>(total);
  auto m = std::min(total, static_cast<std::size_t>(std::floor(target * t)) + 1);
  while (m > 0 && static_cast<double>(m) / t > target) --m;
  return m;
}

std::size_t kept_count(double d, std::size_t n) {
  require(d >= 0.0 && d <= 1.0, ErrorCode::kInvalidArgument, "density must lie in [0, 1]");
  // d * n may land a few ulps above an integer it exactly represents.
  const double x = d * static_cast<double>(n);
  const double r = std::round(x);
  const double c = std::abs(x - r) <= 1e-9 * std::max(1.0, x) ? r : std::ceil(x);
  return std::min(n, static_cast<std::size_t>(c));
}

}  // namespace fedtiny
