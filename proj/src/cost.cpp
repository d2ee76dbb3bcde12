#include "fedtiny/cost.hpp"

#include <algorithm>
#include <cmath>

#include "fedtiny/error.hpp"

namespace fedtiny {

std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::kDense: return "dense";
    case Scheme::kBitmap: return "bitmap";
    case Scheme::kCoo: return "coo";
    case Scheme::kCsr: return "csr";
    case Scheme::kCsc: return "csc";
  }
  return "?";
}

Scheme parse_scheme(const std::string& s) {
  for (auto v : {Scheme::kDense, Scheme::kBitmap, Scheme::kCoo, Scheme::kCsr, Scheme::kCsc})
    if (to_string(v) == s) return v;
  fail(ErrorCode::kParse, "unknown storage scheme '" + s + "'");
}

Scheme choose_scheme(double density) {
  require(density >= 0.0 && density <= 1.0, ErrorCode::kInvalidArgument,
          "density must lie in [0, 1]");
  if (density >= 0.9) return Scheme::kDense;
  if (density >= 0.3) return Scheme::kBitmap;
  if (density >= 0.1) return Scheme::kCoo;
  return Scheme::kCsr;
}

Scheme choose_scheme(std::uint64_t m, std::uint64_t n) {
  require(n > 0 && m <= n, ErrorCode::kInvalidArgument, "need 0 <= m <= n and n > 0");
  if (10 * m >= 9 * n) return Scheme::kDense;
  if (10 * m >= 3 * n) return Scheme::kBitmap;
  if (10 * m >= n) return Scheme::kCoo;
  return Scheme::kCsr;
}

std::uint64_t ceil_log2(std::uint64_t x) {
  std::uint64_t bits = 0;
  while (bits < 64 && (std::uint64_t{1} << bits) < x) ++bits;
  return bits;
}

StorageEntry storage_bits(std::uint64_t n, std::uint64_t rows, std::uint64_t cols,
                          std::uint64_t m, std::uint64_t b) {
  require(n > 0 && rows * cols == n, ErrorCode::kInvalidArgument, "n must equal rows * cols");
  require(m <= n, ErrorCode::kInvalidArgument, "more nonzeros than elements");
  require(b >= 1, ErrorCode::kInvalidArgument, "bit width must be at least 1");
  StorageEntry e;
  e.n = n;
  e.rows = rows;
  e.cols = cols;
  e.nnz = m;
  e.bit_width = b;
  e.scheme = choose_scheme(m, n);
  switch (e.scheme) {
    case Scheme::kDense:
      e.position_bits = 0;
      e.total_bits = n * b;
      return e;
    case Scheme::kBitmap:
      e.position_bits = n;
      break;
    case Scheme::kCoo:
      e.position_bits = m * ceil_log2(n);
      break;
    case Scheme::kCsr:
    case Scheme::kCsc: {
      // With m == 0 both pointer terms vanish (ceil_log2(0) == 0), so s == 0.
      const auto csr = m * ceil_log2(cols) + rows * ceil_log2(m);
      const auto csc = m * ceil_log2(rows) + cols * ceil_log2(m);
      e.scheme = csc < csr ? Scheme::kCsc : Scheme::kCsr;
      e.position_bits = std::min(csr, csc);
      break;
    }
  }
  e.total_bits = e.position_bits + m * b;
  return e;
}

StorageEntry tensor_storage(const std::vector<std::size_t>& shape, std::uint64_t m,
                            std::uint64_t b) {
  require(!shape.empty(), ErrorCode::kInvalidArgument, "tensor shape is empty");
  std::vector<std::uint64_t> dims(shape.begin(), shape.end());
  std::uint64_t n = 1;
  for (auto d : dims) n *= d;
  if (dims.size() == 1) return storage_bits(n, 1, n, m, b);
  // Keep the original positions of the two longest axes; row-major order
  // puts the earlier one first.
  std::vector<std::size_t> axes(dims.size());
  for (std::size_t i = 0; i < axes.size(); ++i) axes[i] = i;
  std::stable_sort(axes.begin(), axes.end(),
                   [&](std::size_t a, std::size_t c) { return dims[a] > dims[c]; });
  const auto first = std::min(axes[0], axes[1]), second = std::max(axes[0], axes[1]);
  std::uint64_t rows = dims[first], cols = dims[second];
  for (std::size_t i = 0; i < dims.size(); ++i)
    if (i != first && i != second) rows *= dims[i];
  return storage_bits(n, rows, cols, m, b);
}

StorageReport model_storage(const Network& net, const Mask& mask, std::uint64_t bit_width) {
  StorageReport rep;
  const auto add = [&](std::size_t layer, const char* name, const std::vector<std::size_t>& shape,
                       std::uint64_t nnz) {
    auto e = tensor_storage(shape, nnz, bit_width);
    e.layer = layer;
    e.tensor = name;
    rep.total_bits += e.total_bits;
    rep.tensors.push_back(std::move(e));
  };
  for (std::size_t i = 0; i < net.size(); ++i) {
    const auto& layer = net.layer(i);
    if (auto* lin = std::get_if<LinearLayer>(&layer)) {
      const LayerMask* lm = lin->prunable ? mask.find(i) : nullptr;
      add(i, "weight", lin->weight.shape(), lm ? lm->nnz() : lin->weight.size());
      add(i, "bias", lin->bias.shape(), lin->bias.size());
    } else if (auto* bn = std::get_if<BatchNormLayer>(&layer)) {
      const std::vector<std::size_t> shape{bn->state.features()};
      add(i, "bn_scale", shape, bn->state.features());
      add(i, "bn_shift", shape, bn->state.features());
    }
  }
  return rep;
}

double forward_flops(const Network& net, const Mask& mask, std::size_t batch) {
  require(batch >= 1, ErrorCode::kInvalidArgument, "batch size must be at least 1");
  const double b = static_cast<double>(batch);
  double flops = 0.0;
  for (std::size_t i = 0; i < net.size(); ++i) {
    const auto& layer = net.layer(i);
    if (auto* lin = std::get_if<LinearLayer>(&layer)) {
      const LayerMask* lm = lin->prunable ? mask.find(i) : nullptr;
      const double nnz = static_cast<double>(lm ? lm->nnz() : lin->weight.size());
      flops += 2.0 * nnz * b;
    } else if (auto* relu = std::get_if<ReluLayer>(&layer)) {
      flops += b * static_cast<double>(relu->width);
    }
  }
  return flops;
}

std::string to_string(CostAlgorithm a) {
  switch (a) {
    case CostAlgorithm::kDenseTrain: return "dense";
    case CostAlgorithm::kStaticSparse: return "static_sparse";
    case CostAlgorithm::kPruneFL: return "prunefl";
    case CostAlgorithm::kFedTiny: return "fedtiny";
  }
  return "?";
}

CostAlgorithm parse_cost_algorithm(const std::string& s) {
  for (auto a : {CostAlgorithm::kDenseTrain, CostAlgorithm::kStaticSparse, CostAlgorithm::kPruneFL,
                 CostAlgorithm::kFedTiny})
    if (to_string(a) == s) return a;
  fail(ErrorCode::kInvalidArgument, "unknown cost algorithm tag '" + s + "'");
}

namespace {

void require_nonnegative(std::initializer_list<double> xs) {
  for (double x : xs)
    require(x >= 0.0 && std::isfinite(x), ErrorCode::kInvalidArgument,
            "cost inputs must be finite and non-negative");
}

}  // namespace

double round_peak_flops(CostAlgorithm algo, double dense_forward, double sparse_forward,
                        double local_iterations, double extra) {
  require_nonnegative({dense_forward, sparse_forward, local_iterations, extra});
  switch (algo) {
    case CostAlgorithm::kDenseTrain: return 3.0 * dense_forward * local_iterations;
    case CostAlgorithm::kStaticSparse: return 3.0 * sparse_forward * local_iterations;
    case CostAlgorithm::kPruneFL: return (2.0 * sparse_forward + dense_forward) * local_iterations;
    case CostAlgorithm::kFedTiny: return 3.0 * sparse_forward * local_iterations + extra;
  }
  fail(ErrorCode::kInvalidArgument, "unknown cost algorithm");
}

FlopsReport flops_report(CostAlgorithm algo, double dense_forward, double sparse_forward,
                         double local_iterations, double extra) {
  FlopsReport r;
  r.algorithm = algo;
  r.dense_forward = dense_forward;
  r.sparse_forward = sparse_forward;
  r.local_iterations = local_iterations;
  r.extra = algo == CostAlgorithm::kFedTiny ? extra : 0.0;
  r.peak = round_peak_flops(algo, dense_forward, sparse_forward, local_iterations, r.extra);
  return r;
}

MemoryReport training_memory(CostAlgorithm algo, double dense_params, double sparse_params,
                             double activations, std::uint64_t bit_width,
                             std::uint64_t topk_total) {
  require_nonnegative({dense_params, sparse_params, activations});
  require(bit_width >= 1, ErrorCode::kInvalidArgument, "bit width must be at least 1");
  MemoryReport r;
  r.algorithm = algo;
  r.dense_params = dense_params;
  r.sparse_params = sparse_params;
  r.activations = activations;
  switch (algo) {
    case CostAlgorithm::kDenseTrain:
      r.total = 2.0 * dense_params + 2.0 * activations;
      break;
    case CostAlgorithm::kStaticSparse:
      r.total = 2.0 * sparse_params + 2.0 * activations;
      break;
    case CostAlgorithm::kPruneFL:
      r.total = dense_params + sparse_params + 2.0 * activations;
      break;
    case CostAlgorithm::kFedTiny:
      // Each buffered gradient keeps a value and an index: 3 b bits per entry.
      r.topk_bytes = 3.0 * static_cast<double>(bit_width) / 8.0 * static_cast<double>(topk_total);
      r.total = 2.0 * sparse_params + 2.0 * activations + r.topk_bytes;
      break;
  }
  return r;
}

double activation_bytes(const Network& net, std::size_t batch, std::uint64_t bit_width) {
  double values = 0.0;
  for (const auto& layer : net.layers()) {
    if (auto* lin = std::get_if<LinearLayer>(&layer))
      values += static_cast<double>(lin->out_features());
    else if (auto* bn = std::get_if<BatchNormLayer>(&layer))
      values += static_cast<double>(bn->state.features());
    else
      values += static_cast<double>(std::get<ReluLayer>(layer).width);
  }
  return values * static_cast<double>(batch) * static_cast<double>(bit_width) / 8.0;
}

double extra_gradient_flops(const Network& net, const Mask& mask,
                            const std::vector<std::size_t>& layers, std::size_t batch) {
  double pruned = 0.0;
  for (auto i : layers) {
    const auto* lm = mask.find(i);
    const double n = static_cast<double>(net.linear(i).weight.size());
    pruned += lm ? n - static_cast<double>(lm->nnz()) : 0.0;
  }
  return 2.0 * static_cast<double>(batch) * pruned;
}

}  // namespace fedtiny
