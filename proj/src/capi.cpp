#include "fedtiny/fedtiny.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <new>
#include <string>

#include "fedtiny/checkpoint.hpp"
#include "fedtiny/config.hpp"
#include "fedtiny/error.hpp"
#include "fedtiny/runner.hpp"

struct ft_config {
  fedtiny::ExperimentConfig cfg;
};

struct ft_model {
  fedtiny::Checkpoint ck;
};

namespace {

thread_local std::string g_last_error;

char* dup_string(const std::string& s) {
  auto* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

template <typename Fn>
ft_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return FT_OK;
  } catch (const fedtiny::Error& e) {
    g_last_error = e.what();
    return static_cast<ft_status>(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return FT_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return FT_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return FT_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  fedtiny::require(p != nullptr, fedtiny::ErrorCode::kInvalidArgument,
                   std::string(what) + " is null");
}

}  // namespace

static_assert(static_cast<int>(fedtiny::ErrorCode::kInternal) == FT_INTERNAL);
static_assert(static_cast<int>(fedtiny::ErrorCode::kParse) == FT_PARSE_ERROR);

extern "C" {

const char* ft_version(void) { return fedtiny::kToolVersion; }

const char* ft_last_error(void) { return g_last_error.c_str(); }

void ft_string_free(char* s) { std::free(s); }

ft_status ft_config_default(ft_config** out) {
  return guarded([&] {
    need(out, "out");
    *out = new ft_config{};
  });
}

ft_status ft_config_load(const char* path, ft_config** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = nullptr;
    *out = new ft_config{fedtiny::load_config(path)};
  });
}

ft_status ft_config_parse(const char* text, ft_config** out) {
  return guarded([&] {
    need(text, "text");
    need(out, "out");
    *out = nullptr;
    *out = new ft_config{fedtiny::parse_config(text)};
  });
}

ft_status ft_config_set(ft_config* cfg, const char* key, const char* value) {
  return guarded([&] {
    need(cfg, "config");
    need(key, "key");
    need(value, "value");
    fedtiny::set_config_value(cfg->cfg, key, value);
  });
}

ft_status ft_config_override(ft_config* cfg, const char* assignment) {
  return guarded([&] {
    need(cfg, "config");
    need(assignment, "assignment");
    fedtiny::apply_override(cfg->cfg, assignment);
  });
}

ft_status ft_config_get(const ft_config* cfg, const char* key, char** value) {
  return guarded([&] {
    need(cfg, "config");
    need(key, "key");
    need(value, "value");
    *value = dup_string(fedtiny::get_config_value(cfg->cfg, key));
  });
}

ft_status ft_config_serialize(const ft_config* cfg, char** text) {
  return guarded([&] {
    need(cfg, "config");
    need(text, "text");
    *text = dup_string(fedtiny::serialize_config(cfg->cfg));
  });
}

ft_status ft_config_validate(const ft_config* cfg) {
  return guarded([&] {
    need(cfg, "config");
    cfg->cfg.validate();
  });
}

void ft_config_free(ft_config* cfg) { delete cfg; }

ft_status ft_run_experiment(const ft_config* cfg, const char* out_dir, const char* run_id,
                            char** run_dir) {
  return guarded([&] {
    need(cfg, "config");
    need(out_dir, "out_dir");
    const auto s = fedtiny::run_to_directory(cfg->cfg, out_dir, run_id ? run_id : "");
    if (run_dir) *run_dir = dup_string(s.paths.dir.string());
  });
}

ft_status ft_sweep(const ft_config* cfg, const char* out_dir, const char* axis, const char* values,
                   size_t workers, char** summary_path) {
  return guarded([&] {
    need(cfg, "config");
    need(out_dir, "out_dir");
    need(axis, "axis");
    need(values, "values");
    const auto s = fedtiny::run_sweep(cfg->cfg, out_dir, axis, fedtiny::split_csv_list(values),
                                      workers);
    if (summary_path) *summary_path = dup_string(s.summary_csv.string());
  });
}

ft_status ft_model_load(const char* path, ft_model** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = nullptr;
    *out = new ft_model{fedtiny::load_checkpoint(path)};
  });
}

ft_status ft_model_density(const ft_model* model, double* density) {
  return guarded([&] {
    need(model, "model");
    need(density, "density");
    *density = model->ck.mask.density();
  });
}

ft_status ft_model_cost_report(const ft_model* model, uint64_t bit_width, char** json) {
  return guarded([&] {
    need(model, "model");
    need(json, "json");
    *json = dup_string(fedtiny::cost_report_json(model->ck, bit_width));
  });
}

void ft_model_free(ft_model* model) { delete model; }

}  // extern "C"
