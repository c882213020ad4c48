#ifndef MSMOMENTS_H
#define MSMOMENTS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes. The engine errors use the same values as the command line
// exit codes.
typedef enum MsmStatus {
  MSM_STATUS_OK = 0,
  MSM_STATUS_CONFIG = 2,
  MSM_STATUS_NUMERICAL = 3,
  MSM_STATUS_VALIDATION = 4,
  MSM_STATUS_NULL_POINTER = 10,
  MSM_STATUS_BUFFER_TOO_SMALL = 11,
  MSM_STATUS_INVALID_UTF8 = 12,
  MSM_STATUS_PANIC = 13,
} MsmStatus;

// Opaque model handle.
typedef struct MsmModel MsmModel;

// Discretisation settings. `scheme` is 0 for Euler and 1 for the midpoint
// matrix exponential.
typedef struct MsmNumerics {
  double h;
  uint32_t scheme;
  size_t block_cap;
} MsmNumerics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Default discretisation settings.
struct MsmNumerics msm_numerics_default(void);

// Loads a model file, or a bundled model by name (e.g. `disability_g82m`).
//
// # Safety
// `source` must be a valid NUL-terminated string and `out` a valid pointer.
enum MsmStatus msm_model_load(const char *source, struct MsmModel **out);

// Parses a model from a JSON document.
//
// # Safety
// `json` must be a valid NUL-terminated string and `out` a valid pointer.
enum MsmStatus msm_model_from_json(const char *json, struct MsmModel **out);

// Releases a model. Null is ignored.
//
// # Safety
// `model` must be null or a handle not yet freed.
void msm_model_free(struct MsmModel *model);

// Number of states, or 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
size_t msm_model_num_states(const struct MsmModel *model);

// Number of contracts, or 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
size_t msm_model_num_contracts(const struct MsmModel *model);

// Model horizon, or NaN for a null handle.
//
// # Safety
// `model` must be null or a live handle.
double msm_model_horizon(const struct MsmModel *model);

// `P(s, t)` into `out` (`J * J` values).
//
// # Safety
// `model` must be a live handle, `numerics` null or valid, and `out` valid
// for `len` writes.
enum MsmStatus msm_transition_probabilities(const struct MsmModel *model,
                                            double s,
                                            double t,
                                            const struct MsmNumerics *numerics,
                                            double *out,
                                            size_t len);

// Conditional moments `V_i^(k)(s, t)` for all states into `out` (`J`
// values). With `central` nonzero the central moments are returned.
//
// # Safety
// `model` must be a live handle, `k` valid for `n` reads, `numerics` null or
// valid, and `out` valid for `len` writes.
enum MsmStatus msm_conditional_moments(const struct MsmModel *model,
                                       const uint32_t *k,
                                       size_t n,
                                       double s,
                                       double t,
                                       bool central,
                                       const struct MsmNumerics *numerics,
                                       double *out,
                                       size_t len);

// Covariance (or, with `correlation` nonzero, correlation) matrix of the
// present values given `Z_s = state`, into `out` (`n * n` values).
// Correlations involving a contract with vanishing variance are 0.
//
// # Safety
// `model` must be a live handle, `numerics` null or valid, and `out` valid
// for `len` writes.
enum MsmStatus msm_covariance(const struct MsmModel *model,
                              size_t state,
                              double s,
                              double t,
                              bool correlation,
                              const struct MsmNumerics *numerics,
                              double *out,
                              size_t len);

// `F(theta; s, t)` into `out` (`J * J` values).
//
// # Safety
// `model` must be a live handle, `theta` valid for `n` reads, `numerics`
// null or valid, and `out` valid for `len` writes.
enum MsmStatus msm_mgf(const struct MsmModel *model,
                       const double *theta,
                       size_t n,
                       double s,
                       double t,
                       const struct MsmNumerics *numerics,
                       double *out,
                       size_t len);

// Copies the last error message of this thread into `buf` (truncated and
// NUL-terminated) and returns its full length in bytes, excluding the NUL.
//
// # Safety
// `buf` must be null or valid for `len` writes.
size_t msm_last_error_message(char *buf, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MSMOMENTS_H */
