#ifndef PSR_NOISE_H
#define PSR_NOISE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Treatment of decay into the unaddressed F_g=1 level.
 */
typedef enum PsrLowerLevel {
  PSR_LOWER_LEVEL_RESERVOIR = 0,
  PSR_LOWER_LEVEL_RECYCLE = 1,
} PsrLowerLevel;

typedef enum PsrStatus {
  PSR_STATUS_OK = 0,
  PSR_STATUS_NULL_POINTER = 1,
  PSR_STATUS_INVALID_ARGUMENT = 2,
  PSR_STATUS_RANK_DEFICIENT = 3,
  PSR_STATUS_NUMERICAL_FAILURE = 4,
  PSR_STATUS_IO = 5,
  PSR_STATUS_CONFIG = 6,
  PSR_STATUS_TRACE_FORMAT = 7,
  PSR_STATUS_OUT_OF_RANGE = 8,
  PSR_STATUS_PANIC = 99,
} PsrStatus;

/*
 Opaque atomic model.
 */
typedef struct PsrModel PsrModel;

/*
 Opaque sweep: a parsed config and, once run, its rows.
 */
typedef struct PsrSweep PsrSweep;

typedef struct PsrNoiseExtrema {
  double v_min;
  double v_max;
  double theta_min;
} PsrNoiseExtrema;

typedef struct PsrNoisePoint {
  double detuning_mhz;
  double omega_mhz;
  double cooperativity;
  double gamma;
  double power_mw;
  double v_min_db;
  double v_max_db;
  double theta_min_rad;
  double contrast_db;
  /*
   Nonzero if the point failed; the values are then NaN.
   */
  int32_t failed;
} PsrNoisePoint;

typedef struct PsrTraceExtrema {
  double min_db;
  double max_db;
  double raw_min_db;
  double raw_max_db;
  double fit_a;
  double fit_b;
  double fit_c;
  double fit_s;
  double fit_rms;
  /*
   Nonzero if the fit failed and min/max are raw sample extrema.
   */
  int32_t fallback;
  /*
   Nonzero if min and max violate the uncertainty bound.
   */
  int32_t heisenberg_warning;
} PsrTraceExtrema;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version as a static NUL-terminated string.
 */
const char *psr_version(void);

/*
 Copies the calling thread's last error message into `buf` (NUL
 terminated, truncated to `len`). Returns the full message length, or 0
 if there is none.

 # Safety
 `buf` must be null or valid for `len` bytes.
 */
size_t psr_last_error(char *buf, size_t len);

/*
 Builds the 87Rb D1 model with default constants.

 # Safety
 `out` must be valid for a pointer write.
 */
enum PsrStatus psr_model_new(enum PsrLowerLevel lower, struct PsrModel **out);

/*
 # Safety
 `model` must be null or a handle from `psr_model_new` not yet freed.
 */
void psr_model_free(struct PsrModel *model);

/*
 Number of internal states of the model.

 # Safety
 `model` must be null or a live handle.
 */
size_t psr_model_dim(const struct PsrModel *model);

/*
 Propagates through a sample and writes the 2×2 quadrature covariance
 (row-major, SQL units) to `out_cov`. Frequencies are in MHz.

 # Safety
 `model` must be a live handle and `out_cov` valid for 4 doubles.
 */
enum PsrStatus psr_propagate(const struct PsrModel *model,
                             double rabi_gamma,
                             double detuning_mhz,
                             double omega_mhz,
                             double cooperativity,
                             double gamma_over_gamma,
                             size_t n_slices,
                             double *out_cov);

/*
 Minimum and maximum quadrature variance of a row-major 2×2 covariance.

 # Safety
 `cov` must be valid for 4 doubles and `out` for one write.
 */
enum PsrStatus psr_min_max_noise(const double *cov, struct PsrNoiseExtrema *out);

/*
 Rabi frequency in units of Γ for a beam of `power_mw` over `cross_section_cm2`.

 # Safety
 `out` must be valid for one write.
 */
enum PsrStatus psr_rabi_from_power(double power_mw, double cross_section_cm2, double *out);

/*
 Loads a sweep config file. The sweep is not run yet.

 # Safety
 `path` must be a NUL-terminated string and `out` valid for a pointer write.
 */
enum PsrStatus psr_sweep_from_config(const char *path, struct PsrSweep **out);

/*
 Number of points the sweep produces.

 # Safety
 `sweep` must be null or a live handle.
 */
size_t psr_sweep_len(const struct PsrSweep *sweep);

/*
 Runs the sweep. Per-point failures are reported through
 `PsrNoisePoint::failed`, not through the status.

 # Safety
 `sweep` must be a live handle.
 */
enum PsrStatus psr_sweep_run(struct PsrSweep *sweep);

/*
 Reads point `index` of a sweep that has been run.

 # Safety
 `sweep` must be a live handle and `out` valid for one write.
 */
enum PsrStatus psr_sweep_point(const struct PsrSweep *sweep,
                               size_t index,
                               struct PsrNoisePoint *out);

/*
 # Safety
 `sweep` must be null or a handle from `psr_sweep_from_config` not yet freed.
 */
void psr_sweep_free(struct PsrSweep *sweep);

/*
 Fits a calibrated trace (dB relative to shot noise) and reports its extrema.

 # Safety
 `coords` and `db` must be valid for `n` doubles; `out` for one write.
 */
enum PsrStatus psr_extract_extrema(const double *coords,
                                   const double *db,
                                   size_t n,
                                   struct PsrTraceExtrema *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PSR_NOISE_H */
