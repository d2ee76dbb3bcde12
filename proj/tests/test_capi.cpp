// Exercises the shared library through its C interface only.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "fedtiny/fedtiny.h"

namespace fs = std::filesystem;

namespace {

fs::path scratch() {
  const char* env = std::getenv("FEDTINY_TEST_TMP");
  fs::path p = env ? fs::path(env) : fs::temp_directory_path() / "fedtiny_capi";
  fs::create_directories(p);
  return p;
}

const char* kTiny =
    "[data]\nclasses = 3\nper_class = 40\ndim = 4\n"
    "[federation]\nclients = 3\n"
    "[model]\nhidden = 16,16\n"
    "[training]\nrounds = 4\nlocal_epochs = 1\nbatch_size = 16\npretrain_epochs = 1\n"
    "[pruning]\ndensity = 0.2\npool_size = 3\ninterval = 2\nstop_round = 4\n"
    "[run]\nworkers = 1\n";

std::string take(char* s) {
  std::string out = s ? s : "";
  ft_string_free(s);
  return out;
}

}  // namespace

TEST_CASE("config handles") {
  ft_config* cfg = nullptr;
  REQUIRE(ft_config_parse(kTiny, &cfg) == FT_OK);
  CHECK(ft_config_set(cfg, "density", "0.05") == FT_OK);
  char* v = nullptr;
  REQUIRE(ft_config_get(cfg, "pruning.density", &v) == FT_OK);
  CHECK(take(v) == "0.05");
  CHECK(ft_config_override(cfg, "bogus=1") == FT_INVALID_ARGUMENT);
  CHECK(std::string(ft_last_error()).find("bogus") != std::string::npos);
  CHECK(ft_config_set(cfg, "density", "2") == FT_OK);
  CHECK(ft_config_validate(cfg) == FT_INVALID_ARGUMENT);
  CHECK(ft_config_set(cfg, "rounds", "x") == FT_PARSE_ERROR);

  char* text = nullptr;
  REQUIRE(ft_config_serialize(cfg, &text) == FT_OK);
  ft_config* again = nullptr;
  CHECK(ft_config_parse(text, &again) == FT_OK);
  ft_string_free(text);
  ft_config_free(again);
  ft_config_free(cfg);

  CHECK(ft_config_load("/nonexistent/fedtiny.ini", &cfg) == FT_IO_ERROR);
  CHECK(cfg == nullptr);
  CHECK(ft_config_default(nullptr) == FT_INVALID_ARGUMENT);
  CHECK(std::string(ft_version()).size() > 0);
}

TEST_CASE("run, load checkpoint, cost report") {
  ft_config* cfg = nullptr;
  REQUIRE(ft_config_parse(kTiny, &cfg) == FT_OK);
  char* dir = nullptr;
  REQUIRE(ft_run_experiment(cfg, scratch().c_str(), "capi", &dir) == FT_OK);
  const fs::path run = take(dir);
  for (const char* f : {"manifest.json", "metrics.csv", "metrics.jsonl", "final.ckpt"})
    CHECK(fs::exists(run / f));

  ft_model* model = nullptr;
  REQUIRE(ft_model_load((run / "final.ckpt").c_str(), &model) == FT_OK);
  double d = 0.0;
  CHECK(ft_model_density(model, &d) == FT_OK);
  CHECK(d <= 0.2);
  char* json = nullptr;
  REQUIRE(ft_model_cost_report(model, 8, &json) == FT_OK);
  const auto report = take(json);
  for (const char* key : {"\"scheme\"", "\"bits\"", "\"bytes\"", "\"flops_peak\"", "\"memory_total\""})
    CHECK(report.find(key) != std::string::npos);
  ft_model_free(model);

  std::ofstream(scratch() / "broken.ckpt") << "{\"format\": \"fedtiny-checkpoint\", \"version\": 1";
  CHECK(ft_model_load((scratch() / "broken.ckpt").c_str(), &model) == FT_PARSE_ERROR);

  char* summary = nullptr;
  CHECK(ft_sweep(cfg, scratch().c_str(), "seed", "", 1, &summary) == FT_INVALID_ARGUMENT);
  CHECK(ft_sweep(cfg, scratch().c_str(), "colour", "1,2", 1, &summary) == FT_INVALID_ARGUMENT);
  ft_config_free(cfg);
}
