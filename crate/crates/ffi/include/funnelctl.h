#ifndef FUNNELCTL_H
#define FUNNELCTL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FcStatus {
  FC_STATUS_OK = 0,
  FC_STATUS_NULL_POINTER = 1,
  FC_STATUS_INVALID_ARGUMENT = 2,
  FC_STATUS_CONFIG = 3,
  FC_STATUS_SINGULARITY = 4,
  FC_STATUS_NON_FINITE = 5,
  FC_STATUS_IO = 6,
  FC_STATUS_BUFFER_TOO_SMALL = 7,
  FC_STATUS_PANIC = 8,
} FcStatus;

// Finished closed-loop run with its log and report.
typedef struct FcRun FcRun;

// Parsed scenario.
typedef struct FcScenario FcScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread. The pointer stays valid
// until the next failing call on the same thread.
const char *fc_last_error(void);

// Releases a string returned by this library.
//
// # Safety
// `s` must be null or a pointer obtained from this library, freed once.
void fc_string_free(char *s);

// Stage `i` (1-based) of the auxiliary error chain for the stack `z` of
// `r * m` values. Writes `m` values to `out`.
//
// # Safety
// `z` must point to `r * m` doubles and `out` to `m` writable doubles.
enum FcStatus fc_xi_eval(double k, size_t r, size_t m, const double *z, size_t i, double *out);

// Constant-gain control law with the default gain functions for a funnel
// with constants `alpha`, `beta`. Writes `m` values to `u` and the gain
// argument to `w` (if non-null).
//
// # Safety
// `z` must point to `r * m` doubles, `u` to `m` writable doubles and `w`
// must be null or writable.
enum FcStatus fc_new_fc_control(double k,
                                double alpha,
                                double beta,
                                size_t r,
                                size_t m,
                                const double *z,
                                double *u,
                                double *w);

// Parses a scenario from JSON text.
//
// # Safety
// `json` must be a NUL-terminated string and `out` writable.
enum FcStatus fc_scenario_from_json(const char *json, struct FcScenario **out);

// Loads a scenario file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` writable.
enum FcStatus fc_scenario_from_file(const char *path, struct FcScenario **out);

// Applies a `key=value` override; the scenario is unchanged on failure.
//
// # Safety
// `scn` must be a live scenario handle and `assignment` a NUL-terminated string.
enum FcStatus fc_scenario_set(struct FcScenario *scn, const char *assignment);

// Number of controllers configured in the scenario.
//
// # Safety
// `scn` must be a live scenario handle.
size_t fc_scenario_controller_count(const struct FcScenario *scn);

// # Safety
// `scn` must be null or a handle from this library, freed once.
void fc_scenario_free(struct FcScenario *scn);

// Checks the initial error stack. Writes 1/0 to `feasible`, and the
// per-stage margins to `margins` (capacity `cap`, count to `n_stages`).
//
// # Safety
// `scn` must be a live handle; `feasible` and `n_stages` writable;
// `margins` null or writable for `cap` doubles.
enum FcStatus fc_check_feasibility(const struct FcScenario *scn,
                                   int32_t *feasible,
                                   double *margins,
                                   size_t cap,
                                   size_t *n_stages);

// Simulates controller `index` of the scenario. A run that ends in a
// violation or singularity still succeeds here; inspect
// [`fc_run_exit_code`].
//
// # Safety
// `scn` must be a live handle and `out` writable.
enum FcStatus fc_simulate(const struct FcScenario *scn, size_t index, struct FcRun **out);

// 0 success, 2 funnel violation, 3 singularity or abort; -1 for a null handle.
//
// # Safety
// `run` must be null or a live run handle.
int32_t fc_run_exit_code(const struct FcRun *run);

// Number of logged samples.
//
// # Safety
// `run` must be null or a live run handle.
size_t fc_run_len(const struct FcRun *run);

// Copies the CSV column `name` (e.g. `"t"`, `"norm_e"`, `"u"`) into `buf`.
//
// # Safety
// `run` must be a live handle, `name` NUL-terminated, `buf` writable for
// `cap` doubles and `written` writable.
enum FcStatus fc_run_column(const struct FcRun *run,
                            const char *name,
                            double *buf,
                            size_t cap,
                            size_t *written);

// The run report as JSON; release with [`fc_string_free`]. Null on failure.
//
// # Safety
// `run` must be null or a live run handle.
char *fc_run_report_json(const struct FcRun *run);

// # Safety
// `run` must be null or a handle from this library, freed once.
void fc_run_free(struct FcRun *run);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FUNNELCTL_H */
