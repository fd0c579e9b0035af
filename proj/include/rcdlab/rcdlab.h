#ifndef RCDLAB_H
#define RCDLAB_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define RCD_API __declspec(dllexport)
#else
#define RCD_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum rcd_status {
    RCD_OK = 0,
    RCD_ERR_PARSE = 1,       /* malformed or invalid input; see rcd_last_error_line/column */
    RCD_ERR_ARGUMENT = 2,    /* argument outside the operation's domain */
    RCD_ERR_SOLVER = 3,      /* a solver missed its contract */
    RCD_ERR_INFEASIBLE = 4,  /* empty intermediate set for the requested slack */
    RCD_ERR_IO = 5,
    RCD_ERR_INTERNAL = 6
} rcd_status;

typedef struct rcd_space rcd_space;
typedef struct rcd_result rcd_result;

RCD_API const char* rcd_schema_version(void);

/* Per-thread details of the last failure. */
RCD_API const char* rcd_last_error(void);
RCD_API size_t rcd_last_error_line(void);
RCD_API size_t rcd_last_error_column(void);
RCD_API const char* rcd_last_error_task(void);

/* base_dir resolves {"file": ...} references; may be NULL. validate = 0 skips the metric checks. */
RCD_API rcd_status rcd_space_from_json(const char* text, const char* base_dir, int validate, rcd_space** out);
RCD_API rcd_status rcd_space_model(const char* kind, size_t n, rcd_space** out);
RCD_API void rcd_space_free(rcd_space* space);
RCD_API size_t rcd_space_size(const rcd_space* space);
RCD_API rcd_status rcd_space_validate(const rcd_space* space, int* valid);

/* mu, nu: rcd_space_size weights each. gap is the relative duality gap. */
RCD_API rcd_status rcd_w2(const rcd_space* space, const double* mu, const double* nu, double* w2, double* gap);

/* h_t f for the calibrated form; out holds rcd_space_size values. */
RCD_API rcd_status rcd_heat_apply(const rcd_space* space, const double* f, double t, double* out);

/*
 * options_json (may be NULL): {"seed": int, "threads": int, "tolerances": {...}, "base_dir": str}.
 * threads defaults to RCDLAB_THREADS, which also caps it.
 */
RCD_API rcd_status rcd_run_task(const rcd_space* space, const char* task_json, const char* options_json,
                                rcd_result** out);

/* Writes <id>.json per task, diagnostics.csv and run.json into out_dir. */
RCD_API rcd_status rcd_run_config(const char* config_text, const char* config_name, const char* base_dir,
                                  const char* out_dir, const char* options_json, rcd_result** out);

RCD_API const char* rcd_result_json(const rcd_result* result);
RCD_API int rcd_result_assertion_failed(const rcd_result* result);
/* Failed task and its artifact when an assertion failed, otherwise "". */
RCD_API const char* rcd_result_failed_task(const rcd_result* result);
RCD_API const char* rcd_result_report_path(const rcd_result* result);
RCD_API rcd_status rcd_result_write(const rcd_result* result, const char* path);
RCD_API void rcd_result_free(rcd_result* result);

#ifdef __cplusplus
}
#endif

#endif
