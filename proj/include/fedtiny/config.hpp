#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fedtiny/bn_select.hpp"
#include "fedtiny/prog_prune.hpp"

namespace fedtiny {

enum class Algorithm {
  kFedTiny,
  kStaticRandom,
  kStaticMagnitude,
  kDenseFedAvg,
  kProgressiveOnly,
  kAdaptiveBNOnly,
};

std::string to_string(Algorithm a);
Algorithm parse_algorithm(const std::string& s);

enum class LrDecay { kConstant, kCosine };

struct ExperimentConfig {
  // [data]
  std::string csv_path;  // empty: synthetic blobs
  bool csv_header = false;
  std::size_t classes = 10;
  std::size_t per_class = 600;
  std::size_t dim = 16;
  double spread = 0.6;
  double test_fraction = 0.2;
  double server_fraction = 0.1;

  // [federation]
  std::size_t clients = 10;
  double client_fraction = 1.0;
  double alpha = 0.5;
  bool weighted_aggregation = true;

  // [model]
  std::vector<std::size_t> hidden{64, 64, 64};
  bool batch_norm = true;
  double bn_momentum = 0.9;
  double bn_eps = 1e-5;
  std::size_t blocks = 5;

  // [training]
  std::size_t rounds = 100;
  std::size_t local_epochs = 5;
  std::size_t batch_size = 64;
  double lr = 0.05;
  LrDecay lr_decay = LrDecay::kConstant;
  std::size_t pretrain_epochs = 5;

  // [pruning]
  Algorithm algorithm = Algorithm::kFedTiny;
  double density = 0.05;
  std::size_t pool_size = 50;  // 0: round(0.1 / density)
  double noise = 0.5;
  std::size_t min_survivors = 10;
  double dev_ratio = 0.1;
  bool dev_disjoint = false;
  SigmaAggregation bn_sigma = SigmaAggregation::kStdDev;
  PruneSchedule schedule{};

  // [cost]
  std::uint64_t bit_width = 32;

  // [run]
  std::uint64_t seed = 1;
  std::size_t workers = 0;  // 0: FEDTINY_WORKERS or hardware concurrency

  std::size_t resolved_pool_size() const;
  std::size_t resolved_workers() const;

  // Throws Error(kInvalidArgument) naming the offending "section.key".
  void validate() const;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

// key = value text with [section] headers; unknown keys are errors.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string serialize_config(const ExperimentConfig& cfg);

// `key` is either "section.key" or a bare key name.
void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value);
std::string get_config_value(const ExperimentConfig& cfg, const std::string& key);

// Applies one "key=value" override.
void apply_override(ExperimentConfig& cfg, const std::string& assignment);

// Shortest decimal that parses back to the same double.
std::string format_double(double v);

}  // namespace fedtiny
