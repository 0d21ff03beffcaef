#ifndef RDB_RDB_H_
#define RDB_RDB_H_

/* C interface to the rdb library. Every call returns an rdb_status; on
 * failure rdb_last_error() describes the problem for the calling thread.
 * Strings handed out by the library are released with rdb_free_string. */

#include <stddef.h>

#if defined(RDB_BUILDING_LIBRARY)
#define RDB_API __attribute__((visibility("default")))
#else
#define RDB_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum rdb_status {
  RDB_OK = 0,
  RDB_ERR_INVALID_ARGUMENT = 1,
  RDB_ERR_PARSE = 2,
  RDB_ERR_DUPLICATE = 3,
  RDB_ERR_RANGE = 4,
  RDB_ERR_INDEX = 5,
  RDB_ERR_DIMENSION = 6,
  RDB_ERR_NUMERIC = 7,
  RDB_ERR_DEPENDENCY = 8,
  RDB_ERR_ALIGNMENT = 9,
  RDB_ERR_COMPATIBILITY = 10,
  RDB_ERR_IO = 11,
  RDB_ERR_GENERATION = 12,
  RDB_ERR_CONFIG = 13,
  RDB_ERR_INTERNAL = 14
} rdb_status;

typedef struct rdb_dataset rdb_dataset;
typedef struct rdb_model rdb_model;

RDB_API const char* rdb_version(void);
RDB_API const char* rdb_last_error(void);
RDB_API const char* rdb_status_name(rdb_status status);
/* Process exit code for a status: 0 ok, 2 bad input or config, 1 otherwise. */
RDB_API int rdb_status_exit_code(rdb_status status);
RDB_API void rdb_free_string(char* s);

/* Runs a command (synth, ingest, train, eval, transfer, plot) with a JSON
 * config. *summary_json receives a JSON summary; it may be NULL. */
RDB_API rdb_status rdb_execute(const char* command, const char* config_json, char** summary_json);
/* Replays a run_manifest.json. out_dir may be NULL to reuse the recorded one. */
RDB_API rdb_status rdb_replay(const char* manifest_path, const char* out_dir, char** summary_json);
/* Fully resolved config (defaults merged in) for a command. */
RDB_API rdb_status rdb_resolve_config(const char* command, const char* config_json, char** resolved_json);

RDB_API rdb_status rdb_dataset_open(const char* manifest_path, int with_images, rdb_dataset** out);
RDB_API void rdb_dataset_close(rdb_dataset* dataset);
RDB_API rdb_status rdb_dataset_info(const rdb_dataset* dataset, size_t* frames, size_t* states, size_t* agents);

RDB_API rdb_status rdb_model_open(const char* run_dir, const char* predictor_file, rdb_model** out);
RDB_API void rdb_model_close(rdb_model* model);
/* Predicts pred_len positions (xy interleaved, 2*pred_len doubles) for one
 * agent given its observed window [first_frame, first_frame + obs_len). */
RDB_API rdb_status rdb_model_predict(rdb_model* model, const rdb_dataset* dataset, int agent_id,
                                     int first_frame, int obs_len, int pred_len, double tau,
                                     unsigned long long seed, double* out_xy);

/* Metrics on xy-interleaved trajectories of n points. */
RDB_API rdb_status rdb_ade(const double* predicted, const double* truth, size_t n, double* out);
RDB_API rdb_status rdb_fde(const double* predicted, const double* truth, size_t n, double* out);
RDB_API rdb_status rdb_constant_velocity(const double* observed, size_t n_obs, size_t pred_len,
                                         double* out_xy);

#ifdef __cplusplus
}
#endif

#endif /* RDB_RDB_H_ */
