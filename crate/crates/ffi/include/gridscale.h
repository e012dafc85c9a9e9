#ifndef GRIDSCALE_H
#define GRIDSCALE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

/**
 * Result codes.
 */
typedef enum GsStatus {
  GS_STATUS_OK = 0,
  GS_STATUS_NULL_POINTER = 1,
  GS_STATUS_INVALID_ARGUMENT = 2,
  GS_STATUS_PARSE_ERROR = 3,
  GS_STATUS_IO_ERROR = 4,
  GS_STATUS_NOT_CONVERGED = 5,
  GS_STATUS_INFEASIBLE = 6,
  GS_STATUS_MODEL_ERROR = 7,
  GS_STATUS_FIT_ERROR = 8,
  GS_STATUS_PANIC = 99,
} GsStatus;

/**
 * A parsed network case.
 */
typedef struct GsCase GsCase;

/**
 * A trained surrogate bundle (model plus feature and label scalers).
 */
typedef struct GsSurrogate GsSurrogate;

/**
 * Fitted `m = a * x^alpha`.
 */
typedef struct GsPowerLaw {
  double a;
  double alpha;
  double r_squared;
} GsPowerLaw;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL after a success.
 * The pointer stays valid until the next gridscale call on the same thread.
 */
const char *gs_last_error(void);

/**
 * Frees a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must come from a gridscale function and not have been freed.
 */
void gs_string_free(char *s);

/**
 * Parses MATPOWER text.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be writable.
 */
enum GsStatus gs_case_parse(const char *text, struct GsCase **out);

/**
 * Loads a bundled case by name (`case14`, `case30`, `case57`) or a MATPOWER file.
 *
 * # Safety
 * `path_or_name` must be a NUL-terminated string; `out` must be writable.
 */
enum GsStatus gs_case_load(const char *path_or_name, struct GsCase **out);

/**
 * Releases a case. NULL is ignored.
 *
 * # Safety
 * `case` must come from `gs_case_parse`/`gs_case_load` and not have been freed.
 */
void gs_case_free(struct GsCase *case_);

/**
 * Bus, in-service generator and branch counts. Any output may be NULL.
 *
 * # Safety
 * `case` must be a live handle; non-null outputs must be writable.
 */
enum GsStatus gs_case_dims(const struct GsCase *case_,
                           uintptr_t *n_bus,
                           uintptr_t *n_gen,
                           uintptr_t *n_branch);

/**
 * Canonical JSON of the case. Free the result with `gs_string_free`.
 *
 * # Safety
 * `case` must be a live handle; `out` must be writable.
 */
enum GsStatus gs_case_to_json(const struct GsCase *case_, char **out);

/**
 * Newton–Raphson power flow at the case's own dispatch and loads.
 * `vm` and `va` (radians) receive one entry per bus; `iterations` may be NULL.
 *
 * # Safety
 * `case` must be a live handle; `vm` and `va` must hold `n_bus` doubles.
 */
enum GsStatus gs_acpf(const struct GsCase *case_,
                      double *vm,
                      double *va,
                      uintptr_t n_bus,
                      uint32_t *iterations);

/**
 * DC optimal dispatch for per-bus active loads `pd` (MW). `pg` receives MW
 * per in-service generator; `objective` ($/h) may be NULL.
 *
 * # Safety
 * `case` must be a live handle; `pd` must hold `n_bus` and `pg` `n_gen` doubles.
 */
enum GsStatus gs_dcopf(const struct GsCase *case_,
                       const double *pd,
                       uintptr_t n_bus,
                       double *pg,
                       uintptr_t n_gen,
                       double *objective);

/**
 * Loads a surrogate bundle written by `gridscale train`.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum GsStatus gs_surrogate_load(const char *path, struct GsSurrogate **out);

/**
 * Builds a surrogate from bundle JSON text.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum GsStatus gs_surrogate_from_json(const char *json, struct GsSurrogate **out);

/**
 * Releases a surrogate. NULL is ignored.
 *
 * # Safety
 * `s` must come from a gridscale constructor and not have been freed.
 */
void gs_surrogate_free(struct GsSurrogate *s);

/**
 * Input and output widths of the surrogate.
 *
 * # Safety
 * `s` must be a live handle; non-null outputs must be writable.
 */
enum GsStatus gs_surrogate_dims(const struct GsSurrogate *s,
                                uintptr_t *input_dim,
                                uintptr_t *output_dim);

/**
 * Predicts `n_rows` samples. `x` is row-major `n_rows × input_dim` in raw
 * units (MW / MVAr); `y` receives `n_rows × output_dim` in MW and p.u.
 *
 * # Safety
 * `s` must be a live handle; `x` and `y` must hold the stated element counts.
 */
enum GsStatus gs_surrogate_predict(const struct GsSurrogate *s,
                                   const double *x,
                                   uintptr_t n_rows,
                                   uintptr_t input_dim,
                                   double *y,
                                   uintptr_t y_len);

/**
 * Fits `m = a * x^alpha` to `n` points.
 *
 * # Safety
 * `x` and `m` must hold `n` doubles; `out` must be writable.
 */
enum GsStatus gs_fit_power_law(const double *x,
                               const double *m,
                               uintptr_t n,
                               struct GsPowerLaw *out);

/**
 * Forward FLOPs per sample of a fully connected network. `dims` lists the
 * layer widths from input to output (at least two entries).
 *
 * # Safety
 * `dims` must hold `n_dims` entries; `out` must be writable.
 */
enum GsStatus gs_count_flops(const uintptr_t *dims, uintptr_t n_dims, uint64_t *out);

/**
 * Training FLOPs `3 · flops_forward · n_train · n_epochs`, as a double.
 *
 * # Safety
 * `out` must be writable.
 */
enum GsStatus gs_training_flops(uint64_t flops_forward,
                                uint64_t n_train,
                                uint64_t n_epochs,
                                double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GRIDSCALE_H */
