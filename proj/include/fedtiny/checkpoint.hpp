#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include "fedtiny/cost.hpp"
#include "fedtiny/mask.hpp"
#include "fedtiny/network.hpp"

namespace fedtiny {

inline constexpr const char* kCheckpointFormat = "fedtiny-checkpoint";
inline constexpr int kCheckpointVersion = 1;

// Model snapshot plus the training context the cost report needs.
struct Checkpoint {
  Network model;
  Mask mask;  // empty: dense
  CostAlgorithm algorithm = CostAlgorithm::kDenseTrain;
  std::size_t batch_size = 64;
  std::size_t local_epochs = 1;
  std::size_t round = 0;
  std::size_t topk_total = 0;  // largest sum of a^l_t seen during training
};

// JSON text. Any structural problem on the way back in is Error(kParse).
std::string checkpoint_to_json(const Checkpoint& ck);
Checkpoint checkpoint_from_json(const std::string& text);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Storage, memory and FLOPs report of a checkpoint at `bit_width`, as JSON.
// Top-level keys: scheme, bits, bytes, flops_peak, memory_total (+ details).
std::string cost_report_json(const Checkpoint& ck, std::uint64_t bit_width);

}  // namespace fedtiny
