#ifndef REFLACT_H
#define REFLACT_H

/* C interface to the reflact core. Every call returns an rf_status; on
 * failure rf_last_error() describes the cause (per thread). Strings returned
 * through char** out-parameters are owned by the caller and released with
 * rf_free. JSON is UTF-8 text. */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define RF_API __declspec(dllexport)
#else
#define RF_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum rf_status {
  RF_OK = 0,
  RF_ERR_INVALID_ARGUMENT = 1,
  RF_ERR_UNSUPPORTED = 2,
  RF_ERR_CONFIG = 3,
  RF_ERR_IO = 4,
  RF_ERR_BACKEND = 5,
  RF_ERR_PRECONDITION = 6,
  RF_ERR_INTERNAL = 7
} rf_status;

typedef struct rf_task rf_task;
typedef struct rf_env rf_env;
typedef struct rf_config rf_config;

/* Receives one JSON object per finished episode or trial. */
typedef void (*rf_event_cb)(const char* event_json, void* user);

RF_API const char* rf_version(void);
RF_API const char* rf_last_error(void);
RF_API const char* rf_status_name(rf_status status);
RF_API void rf_free(char* s);

/* Outbound connection attempts made so far by this process. */
RF_API uint64_t rf_network_attempts(void);

/* Async-signal-safe. Running suites stop dispatching new episodes. */
RF_API void rf_request_cancel(void);
RF_API void rf_clear_cancel(void);

/* ---- tasks ---- */
RF_API rf_status rf_task_generate(uint64_t seed, const char* task_type, const char* flavor, rf_task** out);
RF_API rf_status rf_task_from_json(const char* json, rf_task** out);
/* Canonical serialization: sorted keys, no whitespace. */
RF_API rf_status rf_task_to_json(const rf_task* task, char** out);
RF_API rf_status rf_task_id(const rf_task* task, char** out);
RF_API void rf_task_free(rf_task* task);

/* "A..B" (inclusive) or "A" into the half-open [*begin, *end). */
RF_API rf_status rf_parse_seed_range(const char* text, uint64_t* begin, uint64_t* end);

/* Generates the configured suite's tasks into out_dir/tasks/<task_id>.json.
 * Writes {"tasks":[ids],"skipped":["type/flavor"]}. */
RF_API rf_status rf_generate_tasks(const rf_config* cfg, const char* out_dir, char** summary_json);

/* Seeds in [begin, end). Writes {"checked":N,"failures":[{seed,task_type,reason}],"ok":bool}. */
RF_API rf_status rf_verify(uint64_t begin, uint64_t end, const char* task_type, const char* flavor, int step_budget,
                           char** report_json);

/* ---- environment sessions ---- */
RF_API rf_status rf_env_new(const rf_task* task, rf_env** out);
/* {"observation","instruction","progress","step"} */
RF_API rf_status rf_env_reset(rf_env* env, char** out_json);
/* {"observation","nothing_happened","progress","success","step"} */
RF_API rf_status rf_env_step(rf_env* env, const char* action, char** out_json);
/* JSON array of action strings. */
RF_API rf_status rf_env_valid_actions(const rf_env* env, char** out_json);
RF_API rf_status rf_env_state(const rf_env* env, char** out_json);
RF_API void rf_env_free(rf_env* env);

/* ---- configuration ---- */
/* path may be NULL (defaults); overrides_json may be NULL. */
RF_API rf_status rf_config_load(const char* path, const char* overrides_json, rf_config** out);
RF_API rf_status rf_config_hash(const rf_config* cfg, char** out);
/* Redacted JSON description. */
RF_API rf_status rf_config_describe(const rf_config* cfg, char** out_json);
RF_API void rf_config_free(rf_config* cfg);

/* ---- runs ---- */
/* One episode; writes the trajectory as JSON Lines. kind is a backbone name. */
RF_API rf_status rf_run_episode(const rf_config* cfg, const rf_task* task, const char* kind, char** out_jsonl);

/* Runs the configured suite into out_dir (tasks/, trajectories/, manifest.json)
 * and writes a summary {"episodes","summaries","pending","skipped","config_hash"}. */
RF_API rf_status rf_run_suite(const rf_config* cfg, const char* out_dir, rf_event_cb cb, void* user,
                              char** summary_json);

/* Reflexion trials over the configured suite into out_dir (tasks/,
 * trajectories/<task>__<kind>__trial<i>.jsonl, reports/reflexion.json). */
RF_API rf_status rf_run_reflexion(const rf_config* cfg, const char* out_dir, rf_event_cb cb, void* user,
                                  char** summary_json);

/* Re-executes a stored trajectory file and compares the bytes.
 * *identical is 1 or 0; report is {"path","identical","first_difference_line"}. */
RF_API rf_status rf_replay_file(const char* path, int* identical, char** report_json);

/* ---- analytics ---- */
/* Loads result directories, refuses mixed config hashes unless force, writes
 * metrics.csv, overlap.csv and report.md into out_dir. compare_csv lists
 * backbone names for the overlap ("nothinking,react,reflact"); NULL uses all
 * kinds present. */
RF_API rf_status rf_analyze(const char* const* in_dirs, size_t n_dirs, const char* compare_csv, int force,
                            const char* out_dir, char** summary_json);

RF_API rf_status rf_entropy(const double* probabilities, size_t n, double* out);

/* Scores the valid actions before step t of a stored trajectory under each
 * thought variant (JSON array of strings). Writes {"candidates", "variants",
 * "distributions":[{"entries","method","entropy"}]}. */
RF_API rf_status rf_probe(const rf_config* cfg, const char* trajectory_path, int t, const char* variants_json,
                          char** out_json);

#ifdef __cplusplus
}
#endif

#endif
