#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "fedtiny/mask.hpp"
#include "fedtiny/network.hpp"

namespace fedtiny {

// Storage layouts chosen by density band:
//   [0.9, 1] dense, [0.3, 0.9) bitmap, [0.1, 0.3) COO, [0, 0.1) CSR or CSC.
enum class Scheme { kDense, kBitmap, kCoo, kCsr, kCsc };

std::string to_string(Scheme s);
Scheme parse_scheme(const std::string& s);

// Band lookup on a density value. Returns kCsr for the lowest band; the
// orientation is settled by storage_bits().
Scheme choose_scheme(double density);

// Band lookup on an exact nonzero ratio m / n.
Scheme choose_scheme(std::uint64_t m, std::uint64_t n);

// ceil(log2(x)), with the convention 0 for x <= 1.
std::uint64_t ceil_log2(std::uint64_t x);

struct StorageEntry {
  std::size_t layer = 0;
  std::string tensor;  // "weight", "bias", "bn_scale", ...
  Scheme scheme = Scheme::kDense;
  std::uint64_t n = 0, rows = 0, cols = 0, nnz = 0, bit_width = 0;
  std::uint64_t position_bits = 0;
  std::uint64_t total_bits = 0;
};

// Position and total bits for one n_r x n_c matrix holding m nonzeros of
// b bits each:
//   dense   s = n b
//   bitmap  o = n
//   COO     o = m ceil(log2 n)
//   CSR     o = m ceil(log2 n_c) + n_r ceil(log2 m)   (CSC: rows/cols swapped)
// with s = o + m b for the sparse layouts; CSR vs CSC takes the smaller.
StorageEntry storage_bits(std::uint64_t n, std::uint64_t rows, std::uint64_t cols,
                          std::uint64_t m, std::uint64_t b);

// Tensors of rank > 2 are compressed over their two longest dimensions; the
// remaining extents fold into the row count.
StorageEntry tensor_storage(const std::vector<std::size_t>& shape, std::uint64_t m,
                            std::uint64_t b);

struct StorageReport {
  std::vector<StorageEntry> tensors;
  std::uint64_t total_bits = 0;

  double bytes() const noexcept { return static_cast<double>(total_bits) / 8.0; }
  double megabytes() const noexcept { return bytes() / 1e6; }
};

// Every parameter tensor (weights, biases, batch-norm affine parameters).
// Nonzeros of a prunable weight come from `mask` when it covers that layer,
// otherwise the tensor is counted as dense.
StorageReport model_storage(const Network& net, const Mask& mask, std::uint64_t bit_width);

// Forward FLOPs for a batch: 2 * nnz * B per linear layer, B * width per
// activation; batch norm and loss are free. Pass an empty mask for dense.
double forward_flops(const Network& net, const Mask& mask, std::size_t batch);

enum class CostAlgorithm { kDenseTrain, kStaticSparse, kPruneFL, kFedTiny };

std::string to_string(CostAlgorithm a);
CostAlgorithm parse_cost_algorithm(const std::string& s);

struct FlopsReport {
  CostAlgorithm algorithm = CostAlgorithm::kDenseTrain;
  double dense_forward = 0.0;   // F_d
  double sparse_forward = 0.0;  // F_s
  double local_iterations = 0.0;  // E
  double extra = 0.0;             // X, FedTiny only
  double peak = 0.0;
};

// Per-round training FLOPs peak on one client:
//   dense 3 F_d E, static sparse 3 F_s E, PruneFL (2 F_s + F_d) E, FedTiny 3 F_s E + X.
double round_peak_flops(CostAlgorithm algo, double dense_forward, double sparse_forward,
                        double local_iterations, double extra = 0.0);
FlopsReport flops_report(CostAlgorithm algo, double dense_forward, double sparse_forward,
                         double local_iterations, double extra = 0.0);

struct MemoryReport {
  CostAlgorithm algorithm = CostAlgorithm::kDenseTrain;
  double dense_params = 0.0;   // M^p_d, bytes
  double sparse_params = 0.0;  // M^p_s, bytes
  double activations = 0.0;    // M^a, bytes
  double topk_bytes = 0.0;     // FedTiny top-K buffer term
  double total = 0.0;
};

// Training memory footprint in bytes:
//   dense 2 M^p_d + 2 M^a, static sparse 2 M^p_s + 2 M^a,
//   PruneFL M^p_d + M^p_s + 2 M^a, FedTiny 2 M^p_s + 2 M^a + 3 (b/8) sum(a).
MemoryReport training_memory(CostAlgorithm algo, double dense_params, double sparse_params,
                             double activations, std::uint64_t bit_width,
                             std::uint64_t topk_total = 0);

// Bytes of activation storage for one forward pass of `batch` rows: every
// layer output, at `bit_width` bits per value.
double activation_bytes(const Network& net, std::size_t batch, std::uint64_t bit_width);

// Dense gradient cost of the pruned coordinates of `layers` for one batch:
// 2 * B * (n^l - nnz^l) summed over the layers.
double extra_gradient_flops(const Network& net, const Mask& mask,
                            const std::vector<std::size_t>& layers, std::size_t batch);

}  // namespace fedtiny
