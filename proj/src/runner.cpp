#include "fedtiny/runner.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "fedtiny/checkpoint.hpp"
#include "fedtiny/error.hpp"
#include "fedtiny/parallel.hpp"

namespace fedtiny {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + path.string());
  out << text;
  require(static_cast<bool>(out), ErrorCode::kIo, "write failed: " + path.string());
}

// serialize_config text -> {"section": {"key": "value"}}
json config_sections(const ExperimentConfig& cfg) {
  json out = json::object();
  std::istringstream in(serialize_config(cfg));
  std::string line, section;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (line.front() == '[') {
      section = line.substr(1, line.find(']') - 1);
      out[section] = json::object();
      continue;
    }
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    out[section][line.substr(0, eq)] = line.substr(eq + 3);
  }
  return out;
}

}  // namespace

RunPaths run_paths(const fs::path& out, const std::string& run_id) {
  RunPaths p;
  p.dir = out / run_id;
  p.manifest = p.dir / "manifest.json";
  p.metrics_csv = p.dir / "metrics.csv";
  p.metrics_jsonl = p.dir / "metrics.jsonl";
  p.checkpoint = p.dir / "final.ckpt";
  return p;
}

std::string default_run_id(const ExperimentConfig& cfg) {
  return to_string(cfg.algorithm) + "-d" + format_double(cfg.density) + "-s" +
         std::to_string(cfg.seed);
}

std::string metrics_csv_header() { return "round,accuracy,loss,density,peak_flops,memory_bytes\n"; }

std::string metrics_csv_row(const RoundMetrics& m) {
  return std::to_string(m.round) + "," + format_double(m.accuracy) + "," + format_double(m.loss) +
         "," + format_double(m.density) + "," + format_double(m.peak_flops) + "," +
         format_double(m.memory_bytes) + "\n";
}

std::string metrics_json_line(const RoundMetrics& m) {
  json j = {{"round", m.round},
            {"accuracy", m.accuracy},
            {"loss", m.loss},
            {"density", m.density},
            {"pruning_round", m.pruning_round},
            {"targeted_layers", m.targeted_layers},
            {"grown", m.grown},
            {"dropped", m.dropped},
            {"filled", m.filled},
            {"clamped_layers", m.clamped_layers},
            {"nnz_before", m.nnz_before},
            {"nnz_after", m.nnz_after},
            {"topk_capacity", m.topk_capacity},
            {"topk_peak", m.topk_peak},
            {"topk_violations", m.topk_violations},
            {"extra_flops", m.extra_flops},
            {"peak_flops", m.peak_flops},
            {"memory_bytes", m.memory_bytes},
            {"participants", m.participants},
            {"wall_seconds", m.wall_seconds}};
  return j.dump() + "\n";
}

std::string manifest_json(const ExperimentConfig& cfg, const RunPaths& paths) {
  json seeds = json::object();
  for (const auto& [name, value] : resolved_seeds(cfg)) seeds[name] = value;
  json j = {{"tool", "fedtiny"},
            {"version", kToolVersion},
            {"output_dir", paths.dir.string()},
            {"artifacts",
             {{"manifest", paths.manifest.filename().string()},
              {"metrics_csv", paths.metrics_csv.filename().string()},
              {"metrics_jsonl", paths.metrics_jsonl.filename().string()},
              {"checkpoint", paths.checkpoint.filename().string()}}},
            {"seeds", std::move(seeds)},
            {"config", config_sections(cfg)},
            {"config_text", serialize_config(cfg)}};
  return j.dump(2) + "\n";
}

RunSummary run_to_directory(const ExperimentConfig& cfg, const fs::path& out,
                            const std::string& run_id) {
  cfg.validate();
  RunSummary s;
  s.run_id = run_id.empty() ? default_run_id(cfg) : run_id;
  s.paths = run_paths(out, s.run_id);
  std::error_code ec;
  fs::create_directories(s.paths.dir, ec);
  require(!ec, ErrorCode::kIo, "cannot create " + s.paths.dir.string() + ": " + ec.message());
  // Stale artifacts from an earlier run must not survive a failed rerun.
  fs::remove(s.paths.checkpoint, ec);

  write_file(s.paths.manifest, manifest_json(cfg, s.paths));

  std::ofstream csv(s.paths.metrics_csv, std::ios::binary | std::ios::trunc);
  std::ofstream jsonl(s.paths.metrics_jsonl, std::ios::binary | std::ios::trunc);
  require(csv && jsonl, ErrorCode::kIo, "cannot open metrics files in " + s.paths.dir.string());
  csv << metrics_csv_header();
  std::size_t topk_total = 0;
  auto res = run_experiment(cfg, [&](const RoundMetrics& m) {
    csv << metrics_csv_row(m) << std::flush;
    jsonl << metrics_json_line(m) << std::flush;
    topk_total = std::max(topk_total, m.topk_capacity);
  });
  require(static_cast<bool>(csv) && static_cast<bool>(jsonl), ErrorCode::kIo,
          "metrics write failed in " + s.paths.dir.string());

  Checkpoint ck;
  ck.model = std::move(res.model);
  ck.mask = std::move(res.mask);
  ck.algorithm = cfg.algorithm == Algorithm::kDenseFedAvg ? CostAlgorithm::kDenseTrain
                 : (cfg.algorithm == Algorithm::kFedTiny ||
                    cfg.algorithm == Algorithm::kProgressiveOnly)
                     ? CostAlgorithm::kFedTiny
                     : CostAlgorithm::kStaticSparse;
  ck.batch_size = cfg.batch_size;
  ck.local_epochs = cfg.local_epochs;
  ck.round = cfg.rounds;
  ck.topk_total = topk_total;
  save_checkpoint(s.paths.checkpoint, ck);

  s.final_round = res.final_round();
  s.selection = res.selection;
  return s;
}

const std::vector<std::pair<std::string, std::string>>& sweep_axes() {
  static const std::vector<std::pair<std::string, std::string>> axes{
      {"density", "pruning.density"},
      {"alpha", "federation.alpha"},
      {"pool_size", "pruning.pool_size"},
      {"granularity", "pruning.granularity"},
      {"seed", "run.seed"},
  };
  return axes;
}

std::vector<std::string> split_csv_list(const std::string& list) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(list);
  while (std::getline(in, item, ',')) {
    const auto b = item.find_first_not_of(" \t"), e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

SweepSummary run_sweep(const ExperimentConfig& base, const fs::path& out, const std::string& axis,
                       const std::vector<std::string>& values, std::size_t workers) {
  std::string key;
  for (const auto& [name, k] : sweep_axes())
    if (name == axis) key = k;
  if (key.empty()) {
    std::string known;
    for (const auto& [name, k] : sweep_axes()) known += (known.empty() ? "" : "|") + name;
    fail(ErrorCode::kInvalidArgument, "unknown sweep axis '" + axis + "' (" + known + ")");
  }
  require(!values.empty(), ErrorCode::kInvalidArgument, "sweep grid is empty");

  // Validate every grid point before any run starts.
  std::vector<ExperimentConfig> grid;
  std::vector<std::string> ids;
  for (const auto& v : values) {
    ExperimentConfig cfg = base;
    set_config_value(cfg, key, v);
    cfg.validate();
    const auto id = axis + "-" + v;
    require(std::find(ids.begin(), ids.end(), id) == ids.end(), ErrorCode::kInvalidArgument,
            "duplicate sweep value '" + v + "'");
    ids.push_back(id);
    grid.push_back(std::move(cfg));
  }

  const auto n_workers = std::min(workers == 0 ? default_workers() : workers, grid.size());
  if (n_workers > 1)
    for (auto& cfg : grid)
      if (cfg.workers == 0) cfg.workers = 1;

  SweepSummary summary;
  summary.runs.resize(grid.size());
  parallel_for(grid.size(), n_workers,
               [&](std::size_t i) { summary.runs[i] = run_to_directory(grid[i], out, ids[i]); });

  std::ostringstream csv;
  csv << "run_id," << axis << ",final_accuracy,final_loss,final_density,peak_flops,memory_bytes\n";
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto& m = summary.runs[i].final_round;
    csv << ids[i] << "," << values[i] << "," << format_double(m.accuracy) << ","
        << format_double(m.loss) << "," << format_double(m.density) << ","
        << format_double(m.peak_flops) << "," << format_double(m.memory_bytes) << "\n";
  }
  summary.summary_csv = out / "summary.csv";
  write_file(summary.summary_csv, csv.str());
  return summary;
}

}  // namespace fedtiny
