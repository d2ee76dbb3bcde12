#include "fedtiny/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "fedtiny/error.hpp"

namespace fedtiny {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return shape.empty() ? 0 : n;
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(std::vector<std::size_t> shape, double fill) : shape_(std::move(shape)) {
  for (auto e : shape_) require(e > 0, ErrorCode::kInvalidArgument, "tensor extents must be positive");
  values_.assign(shape_product(shape_), fill);
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  for (auto e : shape_) require(e > 0, ErrorCode::kInvalidArgument, "tensor extents must be positive");
  require(shape_product(shape_) == values_.size(), ErrorCode::kShapeMismatch,
          "tensor shape " + shape_string(shape_) + " does not match " +
              std::to_string(values_.size()) + " values");
}

void Tensor::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

bool Tensor::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace fedtiny
