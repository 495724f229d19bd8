#ifndef TRIPDIFF_TRIPDIFF_H
#define TRIPDIFF_TRIPDIFF_H

/* C interface to the tripdiff estimation library.
 *
 * Every fallible call returns a td_status. On failure the message is
 * available from td_last_error() on the same thread until the next call.
 * Strings returned through char** out-parameters are owned by the caller and
 * released with td_string_free. */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define TD_API __declspec(dllexport)
#else
#define TD_API __attribute__((visibility("default")))
#endif

typedef enum td_status {
  TD_OK = 0,
  TD_ERR_INTERNAL = 1,
  TD_ERR_USAGE = 2,
  TD_ERR_DATA = 3,
  TD_ERR_NUMERICAL = 4,
  TD_ERR_DEGENERATE = 5
} td_status;

typedef enum td_sampling { TD_PANEL = 0, TD_REPEATED_CROSS_SECTION = 1 } td_sampling;

typedef struct td_dataset td_dataset;
typedef struct td_result td_result;
typedef struct td_mc_report td_mc_report;

/* Flat view of one estimate. String members point into the owning result
 * and stay valid until it is freed. */
typedef struct td_estimate_view {
  const char* estimand; /* "datt", "cdatt", "att_unaffected_subgroup", ... */
  const char* estimator;
  const char* comparison;
  int g;
  int t;
  double estimate;
  double se;
  double ci_lo;
  double ci_hi;
  double level;
  size_t n;
} td_estimate_view;

TD_API const char* td_version(void);
TD_API const char* td_last_error(void);
TD_API void td_string_free(char* s);

/* Datasets */
TD_API td_status td_dataset_load(const char* path, td_sampling sampling, td_dataset** out);
TD_API void td_dataset_free(td_dataset* ds);
TD_API td_sampling td_dataset_sampling(const td_dataset* ds);
/* Units (or observations), periods, subgroup labels, covariate names. */
TD_API td_status td_dataset_info_json(const td_dataset* ds, char** out_json);
TD_API td_status td_dataset_write(const td_dataset* ds, const char* path);

/* Design checks; *passed is 1 when no fatal finding was made. The design
 * uses the estimation request keys (s, sprime, comparison, ...). */
TD_API td_status td_validate(const td_dataset* ds, const char* request_json, char** out_json, char** out_text,
                             int* passed);

/* Estimation */
TD_API td_status td_estimate(const td_dataset* ds, const char* request_json, td_result** out);
TD_API void td_result_free(td_result* r);
TD_API size_t td_result_count(const td_result* r);
TD_API td_status td_result_get(const td_result* r, size_t index, td_estimate_view* out);
TD_API td_status td_result_to_json(const td_result* r, char** out_json);
TD_API td_status td_result_to_csv(const td_result* r, char** out_csv);
/* The request after defaults are filled in, as JSON. */
TD_API td_status td_request_normalize(const char* request_json, char** out_json);
TD_API td_status td_valid_combinations(char** out_text);

/* Simulation. An empty or NULL dgp_json selects the built-in default. */
TD_API td_status td_default_dgp_json(char** out_json);
TD_API td_status td_dgp_normalize(const char* dgp_json, char** out_json);
TD_API td_status td_generate_trial(const char* dgp_json, uint64_t master_seed, uint64_t trial, td_dataset** out);
TD_API td_status td_simulate(const char* dgp_json, const char* settings_json, td_mc_report** out);
TD_API void td_mc_report_free(td_mc_report* r);
TD_API td_status td_mc_report_to_csv(const td_mc_report* r, char** out_csv);
TD_API td_status td_mc_report_to_json(const td_mc_report* r, char** out_json);
/* Per-trial dump; empty unless the settings asked to keep trials. */
TD_API td_status td_mc_report_trials_csv(const td_mc_report* r, char** out_csv);
/* 1 when some estimator lost more than 1% of trials. */
TD_API int td_mc_report_failed(const td_mc_report* r);

#ifdef __cplusplus
}
#endif

#endif
