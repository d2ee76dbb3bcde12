/* fedtiny C API. Every call returns an ft_status; on failure ft_last_error()
 * describes the most recent error on the calling thread. Strings handed out
 * by the library are released with ft_string_free. */
#ifndef FEDTINY_FEDTINY_H
#define FEDTINY_FEDTINY_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define FT_API __declspec(dllexport)
#elif defined(__GNUC__)
#define FT_API __attribute__((visibility("default")))
#else
#define FT_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ft_status {
  FT_OK = 0,
  FT_INVALID_ARGUMENT = 1,
  FT_SHAPE_MISMATCH = 2,
  FT_PARSE_ERROR = 3,
  FT_IO_ERROR = 4,
  FT_STATE_ERROR = 5,
  FT_EXHAUSTED = 6,
  FT_INTERNAL = 7
} ft_status;

typedef struct ft_config ft_config;
typedef struct ft_model ft_model;

FT_API const char* ft_version(void);
FT_API const char* ft_last_error(void);
FT_API void ft_string_free(char* s);

FT_API ft_status ft_config_default(ft_config** out);
FT_API ft_status ft_config_load(const char* path, ft_config** out);
FT_API ft_status ft_config_parse(const char* text, ft_config** out);
/* key is "section.key" or a bare key; "key=value" form via ft_config_override. */
FT_API ft_status ft_config_set(ft_config* cfg, const char* key, const char* value);
FT_API ft_status ft_config_override(ft_config* cfg, const char* assignment);
FT_API ft_status ft_config_get(const ft_config* cfg, const char* key, char** value);
FT_API ft_status ft_config_serialize(const ft_config* cfg, char** text);
FT_API ft_status ft_config_validate(const ft_config* cfg);
FT_API void ft_config_free(ft_config* cfg);

/* Runs one experiment into <out_dir>/<run_id>; run_id may be NULL or empty.
 * run_dir (optional) receives the run directory path. */
FT_API ft_status ft_run_experiment(const ft_config* cfg, const char* out_dir, const char* run_id,
                                   char** run_dir);
/* values is a comma-separated list. summary_path (optional) receives summary.csv. */
FT_API ft_status ft_sweep(const ft_config* cfg, const char* out_dir, const char* axis,
                          const char* values, size_t workers, char** summary_path);

FT_API ft_status ft_model_load(const char* path, ft_model** out);
FT_API ft_status ft_model_density(const ft_model* model, double* density);
FT_API ft_status ft_model_cost_report(const ft_model* model, uint64_t bit_width, char** json);
FT_API void ft_model_free(ft_model* model);

#ifdef __cplusplus
}
#endif

#endif
