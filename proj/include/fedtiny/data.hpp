#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "fedtiny/tensor.hpp"

namespace fedtiny {

struct Dataset {
  Tensor features;  // N x dim
  std::vector<int> labels;
  std::size_t classes = 0;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t dim() const noexcept { return features.cols(); }
  void validate() const;

  // Rows `indices` in the given order.
  Dataset subset(std::span<const std::size_t> indices) const;
  Dataset slice(std::size_t begin, std::size_t end) const;
  std::vector<std::size_t> class_counts() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// Gaussian class clusters. Class means are drawn uniformly from [-1, 1]^dim
// and samples are mean + spread * N(0, I). Samples are grouped by class.
Dataset make_blobs(std::size_t classes, std::size_t per_class, std::size_t dim, double spread,
                   std::uint64_t seed);

struct PartitionSpec {
  std::size_t clients = 10;
  double alpha = 0.5;
  std::uint64_t seed = 0;
  std::size_t max_attempts = 100;
};

// Per class, draws client proportions p ~ Dir(alpha * 1_K) and hands that
// class's (shuffled) samples out in contiguous runs sized by p. Redraws until
// every client holds at least one sample.
std::vector<Dataset> dirichlet_partition(const Dataset& ds, const PartitionSpec& spec);

// Indices of a uniform sample of max(1, floor(ratio * N)) rows, without
// replacement, returned in ascending order.
std::vector<std::size_t> dev_indices(std::size_t n, double ratio, std::uint64_t seed);
Dataset dev_split(const Dataset& ds, double ratio, std::uint64_t seed);

// Uniform random permutation of the rows.
Dataset shuffled(const Dataset& ds, std::uint64_t seed);

// [begin, end) ranges of consecutive batches. A trailing batch smaller than
// `min_last` is merged into the one before it.
std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n, std::size_t batch,
                                                              std::size_t min_last = 2);

struct CsvOptions {
  bool skip_header = false;
};

// Numeric feature columns followed by an integer label column; no quoting.
Dataset load_csv(const std::filesystem::path& path, const CsvOptions& opts = {});

}  // namespace fedtiny
