#ifndef CTS_CTS_H
#define CTS_CTS_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define CTS_API __declspec(dllexport)
#else
#define CTS_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum cts_status {
  CTS_OK = 0,
  CTS_ERR_CONFIG = 1,             /* invalid hyperparameters or incompatible checkpoint */
  CTS_ERR_DATA = 2,               /* unreadable or malformed input data */
  CTS_ERR_INSUFFICIENT_DATA = 3,  /* a statistical test had too few pairs */
  CTS_ERR_USAGE = 4,              /* bad arguments, null handles */
  CTS_ERR_INTERNAL = 5
} cts_status;

/* Message of the last failure on the calling thread; empty after success. */
CTS_API const char* cts_last_error(void);
CTS_API const char* cts_status_name(cts_status status);
CTS_API const char* cts_version(void);

/* Strings returned through char** out-parameters belong to the caller. */
CTS_API void cts_string_free(char* s);

/* Worker threads for kernels; 1 runs everything on the caller. */
CTS_API cts_status cts_set_num_threads(size_t n);

/* Run configuration: model, loss, training settings, data and output paths. */
typedef struct cts_config cts_config;

CTS_API cts_status cts_config_new(cts_config** out);
CTS_API void cts_config_free(cts_config* cfg);
CTS_API cts_status cts_config_clone(const cts_config* cfg, cts_config** out);
/* `key = value` lines applied on top of the current values. */
CTS_API cts_status cts_config_parse(cts_config* cfg, const char* text);
CTS_API cts_status cts_config_load(cts_config* cfg, const char* path);
/* Reads the "config" object of an analyze JSON document. */
CTS_API cts_status cts_config_parse_json(cts_config* cfg, const char* json);
CTS_API cts_status cts_config_set(cts_config* cfg, const char* key, const char* value);
CTS_API cts_status cts_config_get(const cts_config* cfg, const char* key, char** value);
CTS_API cts_status cts_config_render(const cts_config* cfg, char** text);
CTS_API cts_status cts_config_validate(const cts_config* cfg);
CTS_API int cts_config_equal(const cts_config* a, const cts_config* b);

/* Level dimensions and parameter breakdown as a table, or JSON when json != 0. */
CTS_API cts_status cts_analyze(const cts_config* cfg, int json, char** text);
CTS_API cts_status cts_param_count(const cts_config* cfg, uint64_t* total);

/* Writes a synthetic dataset; *manifest receives the manifest path. */
CTS_API cts_status cts_synth(size_t count, size_t size, size_t classes, uint64_t seed, const char* out_dir,
                             char** manifest);

/* Image size, channels and class count of a dataset. `manifest` may name
   the manifest file or a directory holding manifest.txt. */
CTS_API cts_status cts_manifest_info(const char* manifest, size_t* width, size_t* height, size_t* channels,
                                     size_t* classes);

typedef struct cts_epoch {
  size_t epoch; /* 1-based */
  double train_loss;
  double val_loss;
  double seconds;
  const char* checkpoint; /* empty unless this epoch improved the val loss */
} cts_epoch;

typedef void (*cts_epoch_fn)(const cts_epoch* epoch, void* user);

/* Trains on the manifest (file or directory) named by `data` and writes best.ckpt and
   train_log.csv under `out`. Either out-parameter may be null. */
CTS_API cts_status cts_train(const cts_config* cfg, cts_epoch_fn on_epoch, void* user, char** best_checkpoint,
                             double* best_val_loss);

typedef struct cts_model cts_model;

CTS_API cts_status cts_model_load(const char* checkpoint, cts_model** out);
CTS_API void cts_model_free(cts_model* model);
/* Config echo stored in the checkpoint. */
CTS_API cts_status cts_model_config(const cts_model* model, cts_config** out);
CTS_API cts_status cts_model_epoch(const cts_model* model, size_t* epoch, double* val_loss);

typedef struct cts_report cts_report;

/* Scores a model on one split ("train", "val", "test" or "all") of a manifest. */
CTS_API cts_status cts_evaluate(cts_model* model, const char* manifest, const char* split, int mask_empty,
                                cts_report** out, double* loss);
CTS_API void cts_report_free(cts_report* report);
CTS_API cts_status cts_report_load(const char* path, cts_report** out);
CTS_API cts_status cts_report_save(const cts_report* report, const char* path);
CTS_API cts_status cts_report_csv(const cts_report* report, char** text);
CTS_API cts_status cts_report_from_csv(const char* text, cts_report** out);
CTS_API cts_status cts_report_summary(const cts_report* report, int json, char** text);
CTS_API int cts_report_equal(const cts_report* a, const cts_report* b);
CTS_API cts_status cts_report_overall_dc(const cts_report* report, double* mean);

/* Per-class and overall signed-rank tests of b against a. */
CTS_API cts_status cts_compare(const cts_report* a, const cts_report* b, int json, char** text);

/* Runs the built-in gradient checks; `names` is comma separated, null or
   empty for all. *passed is 1 when every check passed. */
CTS_API cts_status cts_gradcheck(const char* names, uint64_t seed, double tolerance, int json, char** text,
                                 int* passed);

#ifdef __cplusplus
}
#endif

#endif
