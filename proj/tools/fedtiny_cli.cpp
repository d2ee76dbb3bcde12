// fedtiny command-line front end. Talks to the library only through the C API.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fedtiny/fedtiny.h"

namespace {

int report(ft_status st, const char* what) {
  if (st == FT_OK) return 0;
  std::fprintf(stderr, "fedtiny: %s: %s\n", what, ft_last_error());
  return static_cast<int>(st) + 1;  // keep exit codes nonzero for status 0..7
}

struct ConfigHandle {
  ft_config* p = nullptr;
  ~ConfigHandle() { ft_config_free(p); }
};

struct OwnedString {
  char* p = nullptr;
  ~OwnedString() { ft_string_free(p); }
};

int load_config(const std::string& path, const std::vector<std::string>& sets, ConfigHandle& cfg) {
  if (int rc = report(ft_config_load(path.c_str(), &cfg.p), "config")) return rc;
  for (const auto& s : sets)
    if (int rc = report(ft_config_override(cfg.p, s.c_str()), "--set")) return rc;
  return report(ft_config_validate(cfg.p), "config");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fedtiny: federated pruning simulator"};
  app.set_version_flag("--version", std::string(ft_version()));
  app.require_subcommand(1);

  std::string config_path, out_dir = "runs", run_id;
  std::vector<std::string> sets;
  auto* run = app.add_subcommand("run", "run one experiment");
  run->add_option("--config", config_path, "config file")->required();
  run->add_option("--set", sets, "override, key=value (repeatable)");
  run->add_option("--out", out_dir, "output root")->capture_default_str();
  run->add_option("--run-id", run_id, "run directory name");

  std::string axis, values;
  std::size_t sweep_workers = 0;
  auto* sweep = app.add_subcommand("sweep", "one run per value of a config axis");
  sweep->add_option("--config", config_path, "config file")->required();
  sweep->add_option("--axis", axis, "density|alpha|pool_size|granularity|seed")->required();
  sweep->add_option("--values", values, "comma-separated values")->required();
  sweep->add_option("--set", sets, "override, key=value (repeatable)");
  sweep->add_option("--out", out_dir, "output root")->capture_default_str();
  sweep->add_option("--workers", sweep_workers, "parallel grid points (0: FEDTINY_WORKERS)");

  std::string ckpt, report_path;
  std::uint64_t bits = 32;
  auto* cost = app.add_subcommand("cost", "storage/memory/FLOPs report of a checkpoint");
  cost->add_option("--ckpt", ckpt, "checkpoint file")->required();
  cost->add_option("--bits", bits, "bit width per value")->required()->check(CLI::PositiveNumber);
  cost->add_option("--out", report_path, "also write the JSON here");

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) {
    ConfigHandle cfg;
    if (int rc = load_config(config_path, sets, cfg)) return rc;
    OwnedString dir;
    if (int rc = report(ft_run_experiment(cfg.p, out_dir.c_str(), run_id.c_str(), &dir.p), "run"))
      return rc;
    std::cout << dir.p << "\n";
    return 0;
  }
  if (sweep->parsed()) {
    ConfigHandle cfg;
    if (int rc = load_config(config_path, sets, cfg)) return rc;
    OwnedString summary;
    if (int rc = report(ft_sweep(cfg.p, out_dir.c_str(), axis.c_str(), values.c_str(),
                                 sweep_workers, &summary.p),
                        "sweep"))
      return rc;
    std::cout << summary.p << "\n";
    return 0;
  }

  ft_model* model = nullptr;
  if (int rc = report(ft_model_load(ckpt.c_str(), &model), "checkpoint")) return rc;
  OwnedString json;
  const int rc = report(ft_model_cost_report(model, bits, &json.p), "cost");
  ft_model_free(model);
  if (rc) return rc;
  std::cout << json.p;
  if (!report_path.empty()) {
    std::ofstream out(report_path, std::ios::binary);
    out << json.p;
    if (!out) {
      std::fprintf(stderr, "fedtiny: cannot write %s\n", report_path.c_str());
      return 5;
    }
  }
  return 0;
}
