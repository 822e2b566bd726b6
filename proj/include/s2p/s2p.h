/*
 * C interface of the sketch-to-photo library.
 *
 * Every call returns an s2p_status. On failure a description of the error is
 * available from s2p_last_error() on the calling thread until the next call.
 * Handles are opaque and owned by the caller; release them with the matching
 * *_free function (NULL is accepted). Strings returned through char** out
 * parameters are released with s2p_string_free.
 */
#ifndef S2P_H
#define S2P_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define S2P_API __declspec(dllexport)
#else
#define S2P_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum s2p_status {
  S2P_OK = 0,
  S2P_ERR_USAGE = 1,
  S2P_ERR_CONFIG = 2,
  S2P_ERR_DIMENSION = 3,
  S2P_ERR_DOMAIN = 4,
  S2P_ERR_DATASET = 5,
  S2P_ERR_IO = 6,
  S2P_ERR_LOAD = 7,
  S2P_ERR_DIVERGENCE = 8,
  S2P_ERR_COMPATIBILITY = 9,
  S2P_ERR_PROTOCOL = 10,
  S2P_ERR_INTERNAL = 11
} s2p_status;

typedef struct s2p_config s2p_config;
typedef struct s2p_manifest s2p_manifest;
typedef struct s2p_train_result s2p_train_result;
typedef struct s2p_eval_result s2p_eval_result;

S2P_API const char* s2p_version(void);
S2P_API const char* s2p_last_error(void);
S2P_API const char* s2p_status_name(s2p_status status);
/* Process exit code for a status: 0 ok, 2 usage/config, 3 io, 4 divergence,
 * 5 compatibility, 1 anything unexpected. */
S2P_API int s2p_exit_code(s2p_status status);
S2P_API void s2p_string_free(char* s);
/* Silences progress messages on stderr (warnings are kept). */
S2P_API void s2p_set_quiet(int quiet);

/* ---- configuration --------------------------------------------------- */

S2P_API s2p_status s2p_config_new(s2p_config** out);
S2P_API void s2p_config_free(s2p_config* cfg);
/* Merges a YAML file; unknown keys are rejected with S2P_ERR_USAGE. */
S2P_API s2p_status s2p_config_load_file(s2p_config* cfg, const char* path);
S2P_API s2p_status s2p_config_set(s2p_config* cfg, const char* dotted_key, const char* value);
S2P_API s2p_status s2p_config_get(const s2p_config* cfg, const char* dotted_key, char** out);
S2P_API s2p_status s2p_config_validate(const s2p_config* cfg);
/* Resolved configuration as YAML. */
S2P_API s2p_status s2p_config_dump(const s2p_config* cfg, char** out);
S2P_API s2p_status s2p_config_fingerprint(const s2p_config* cfg, char** out);
/* Shape trace: taps, geometry discriminator layers, parameter counts. */
S2P_API s2p_status s2p_inspect(const s2p_config* cfg, char** out);

/* ---- datasets -------------------------------------------------------- */

typedef struct s2p_synth_options {
  int64_t n_identities;
  double train_fraction;
  uint64_t seed;
  int64_t resolution;
  double geometry_jitter;
  const char* texture_style; /* "pencil", "charcoal", "pen"; NULL = pencil */
  int renders_per_identity;
} s2p_synth_options;

S2P_API void s2p_synth_options_default(s2p_synth_options* opts);
S2P_API s2p_status s2p_synthesize_dataset(const s2p_synth_options* opts, const char* out_dir, s2p_manifest** out);

S2P_API s2p_status s2p_manifest_load(const char* path, s2p_manifest** out);
S2P_API void s2p_manifest_free(s2p_manifest* m);
S2P_API s2p_status s2p_manifest_split_sizes(const s2p_manifest* m, size_t* train, size_t* test);
S2P_API s2p_status s2p_manifest_resolution(const s2p_manifest* m, int64_t* out);
/* Path of manifest.json. */
S2P_API const char* s2p_manifest_path(const s2p_manifest* m);

/* ---- training -------------------------------------------------------- */

typedef struct s2p_epoch_info {
  int64_t epoch; /* 1-based */
  int64_t epochs;
  double total;
  double adv_patch_x, adv_patch_y, adv_geo_x, adv_geo_y, cyc_x, cyc_y;
  double seconds;
} s2p_epoch_info;

typedef void (*s2p_epoch_callback)(const s2p_epoch_info* info, void* user);

/* Trains on the manifest's train split into out_dir. With resume != 0 the
 * run continues from out_dir's latest checkpoint when one exists. On
 * S2P_ERR_DIVERGENCE the error message names the last good checkpoint. */
S2P_API s2p_status s2p_train(const s2p_manifest* m, const s2p_config* cfg, const char* out_dir, int resume,
                             s2p_epoch_callback callback, void* user, s2p_train_result** out);
S2P_API void s2p_train_result_free(s2p_train_result* r);
S2P_API const char* s2p_train_result_checkpoint(const s2p_train_result* r);
S2P_API const char* s2p_train_result_metrics(const s2p_train_result* r);
S2P_API const char* s2p_train_result_config_dump(const s2p_train_result* r);

/* Latest checkpoint directory of a run directory. */
S2P_API s2p_status s2p_latest_checkpoint(const char* run_dir, char** out);

/* ---- inference ------------------------------------------------------- */

/* Translates every PNG in in_dir into out_dir under the same file name.
 * direction is "a_to_b" or "b_to_a". When expected_fingerprint is not NULL
 * it must equal the checkpoint's architecture fingerprint. Inputs must have
 * the checkpoint's resolution. */
S2P_API s2p_status s2p_translate_dir(const char* checkpoint, const char* in_dir, const char* out_dir,
                                     const char* direction, const char* expected_fingerprint, size_t* n_written);

/* ---- evaluation ------------------------------------------------------ */

typedef struct s2p_eval_options {
  int64_t repeats;
  uint64_t seed;
  int64_t realism_steps;
  int retrain;
  int write_grids;
} s2p_eval_options;

S2P_API void s2p_eval_options_default(s2p_eval_options* opts);
/* modes[i] ("full", "no_geometry", "cyclegan_baseline") is evaluated from
 * checkpoints[i]. A missing mode fails with S2P_ERR_PROTOCOL. */
S2P_API s2p_status s2p_evaluate(const s2p_manifest* m, const char* const* modes, const char* const* checkpoints,
                                size_t n, const char* out_dir, const s2p_eval_options* opts, s2p_eval_result** out);
S2P_API void s2p_eval_result_free(s2p_eval_result* r);
S2P_API const char* s2p_eval_result_table(const s2p_eval_result* r);
/* Per-method reports as a JSON array. */
S2P_API const char* s2p_eval_result_json(const s2p_eval_result* r);
S2P_API const char* s2p_eval_result_report_path(const s2p_eval_result* r);
S2P_API const char* s2p_eval_result_table_path(const s2p_eval_result* r);
S2P_API size_t s2p_eval_result_grid_count(const s2p_eval_result* r);

#ifdef __cplusplus
}
#endif

#endif /* S2P_H */
