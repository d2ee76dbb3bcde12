#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "fedtiny/config.hpp"
#include "fedtiny/simulator.hpp"

namespace fedtiny {

inline constexpr const char* kToolVersion = "0.3.1";

struct RunPaths {
  std::filesystem::path dir;
  std::filesystem::path manifest;
  std::filesystem::path metrics_csv;
  std::filesystem::path metrics_jsonl;
  std::filesystem::path checkpoint;
};

RunPaths run_paths(const std::filesystem::path& out, const std::string& run_id);

// "<algorithm>-d<density>-s<seed>"
std::string default_run_id(const ExperimentConfig& cfg);

// CSV has no wall-clock column so reruns compare byte for byte.
std::string metrics_csv_header();
std::string metrics_csv_row(const RoundMetrics& m);
std::string metrics_json_line(const RoundMetrics& m);

std::string manifest_json(const ExperimentConfig& cfg, const RunPaths& paths);

struct RunSummary {
  RunPaths paths;
  std::string run_id;
  RoundMetrics final_round;
  SelectionInfo selection;
};

// Writes manifest.json, then metrics per round, then final.ckpt.
// An empty run_id means default_run_id(cfg).
RunSummary run_to_directory(const ExperimentConfig& cfg, const std::filesystem::path& out,
                            const std::string& run_id = "");

// Sweep axes and the config key each one sets.
const std::vector<std::pair<std::string, std::string>>& sweep_axes();

struct SweepSummary {
  std::vector<RunSummary> runs;
  std::filesystem::path summary_csv;
};

// One run per value into <out>/<axis>-<value>, plus <out>/summary.csv.
// Grid points are run on up to `workers` threads (0: default).
SweepSummary run_sweep(const ExperimentConfig& base, const std::filesystem::path& out,
                       const std::string& axis, const std::vector<std::string>& values,
                       std::size_t workers = 0);

std::vector<std::string> split_csv_list(const std::string& list);

}  // namespace fedtiny
