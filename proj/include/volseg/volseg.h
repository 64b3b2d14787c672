#ifndef VOLSEG_VOLSEG_H
#define VOLSEG_VOLSEG_H

/* C interface to the volseg engine. Every call returns a status; on failure
 * volseg_last_error() holds a message for the calling thread. Strings
 * returned through char** are owned by the caller and released with
 * volseg_string_free. */

#include <stddef.h>
#include <stdint.h>

#if defined(VOLSEG_BUILDING_LIBRARY)
#define VOLSEG_API __attribute__((visibility("default")))
#else
#define VOLSEG_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum volseg_status {
  VOLSEG_OK = 0,
  VOLSEG_ERR_INVALID_ARGUMENT = 1,
  VOLSEG_ERR_IO = 2,
  VOLSEG_ERR_FORMAT = 3,
  VOLSEG_ERR_SHAPE = 4,
  VOLSEG_ERR_BACKEND = 5,
  VOLSEG_ERR_PROTOCOL = 6,
  VOLSEG_ERR_TIMEOUT = 7,
  VOLSEG_ERR_NOT_FOUND = 8,
  VOLSEG_ERR_CONFIG = 9,
  VOLSEG_ERR_INTERNAL = 10
} volseg_status;

typedef struct volseg_volume volseg_volume;
typedef struct volseg_mask volseg_mask;
typedef struct volseg_server volseg_server;

VOLSEG_API const char* volseg_version(void);
VOLSEG_API const char* volseg_status_name(volseg_status status);
VOLSEG_API const char* volseg_last_error(void);
VOLSEG_API void volseg_string_free(char* s);

/* Volumes: float32, x fastest. NULL spacing means 1 mm; NULL data means zeros. */
VOLSEG_API volseg_status volseg_volume_load(const char* path, volseg_volume** out);
VOLSEG_API volseg_status volseg_volume_create(const int64_t dims[3], const double spacing[3], const float* data,
                                              volseg_volume** out);
VOLSEG_API volseg_status volseg_volume_save(const volseg_volume* v, const char* path);
VOLSEG_API volseg_status volseg_volume_dims(const volseg_volume* v, int64_t dims[3]);
VOLSEG_API volseg_status volseg_volume_spacing(const volseg_volume* v, double spacing[3]);
/* Borrowed pointer, valid until the volume is freed. */
VOLSEG_API volseg_status volseg_volume_data(const volseg_volume* v, const float** data, size_t* count);
/* Percentile normalization to [0,1]; lo/hi in percent. */
VOLSEG_API volseg_status volseg_volume_normalize(const volseg_volume* v, double lo_pct, double hi_pct,
                                                 volseg_volume** out);
VOLSEG_API void volseg_volume_free(volseg_volume* v);

/* Masks: foreground where the stored value is > 0.5. */
VOLSEG_API volseg_status volseg_mask_load(const char* path, volseg_mask** out);
VOLSEG_API volseg_status volseg_mask_dims(const volseg_mask* m, int64_t dims[3]);
VOLSEG_API volseg_status volseg_mask_count(const volseg_mask* m, size_t* count);
VOLSEG_API void volseg_mask_free(volseg_mask* m);

VOLSEG_API volseg_status volseg_metrics(const volseg_mask* pred, const volseg_mask* label, double tolerance_mm,
                                        double* dice, double* nsd);

/* WindowGrid as JSON: {"volume_dims","window_dims","count","origins","notes"}. */
VOLSEG_API volseg_status volseg_plan_windows_json(const int64_t dims[3], const int64_t window[3], double overlap,
                                                  char** out_json);

/* Runs one experiment config (JSON text). The report JSON comes back in
 * out_json; CSV text in out_csv when non-null. Files are written only when
 * the config names an output_dir. */
VOLSEG_API volseg_status volseg_run_experiment(const char* config_json, char** out_json, char** out_csv);

/* Config JSON: an array of experiment configs, or
 * {"defaults": {...}, "configs": [...]}, each entry merged over defaults.
 * Returns {"table": text, "csv": text, "rows": [...]}. */
VOLSEG_API volseg_status volseg_compare(const char* configs_json, char** out_json);

/* Session service. options_json keys: storage_dir, max_upload_bytes,
 * window, window_workers, nsd_tolerance_mm, http_threads. */
VOLSEG_API volseg_status volseg_server_create(const char* options_json, volseg_server** out);
VOLSEG_API volseg_status volseg_server_bind(volseg_server* s, const char* host, int port, int* bound_port);
/* Blocks until volseg_server_stop is called from another thread. */
VOLSEG_API volseg_status volseg_server_run(volseg_server* s);
VOLSEG_API volseg_status volseg_server_stop(volseg_server* s);
VOLSEG_API void volseg_server_free(volseg_server* s);

#ifdef __cplusplus
}
#endif

#endif
