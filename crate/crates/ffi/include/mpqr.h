#ifndef MPQR_H
#define MPQR_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Result of every fallible call.
typedef enum MpqrStatus {
  MPQR_STATUS_OK = 0,
  MPQR_STATUS_NULL_POINTER = 1,
  MPQR_STATUS_INVALID_ARGUMENT = 2,
  MPQR_STATUS_DIMENSION = 3,
  MPQR_STATUS_OVERFLOW = 4,
  MPQR_STATUS_NOT_A_NUMBER = 5,
  MPQR_STATUS_RANK_DEFICIENT = 6,
  MPQR_STATUS_DOMAIN = 7,
  MPQR_STATUS_INTERNAL = 8,
} MpqrStatus;

typedef enum MpqrAlgorithm {
  MPQR_ALGORITHM_HQR = 0,
  MPQR_ALGORITHM_BQR = 1,
  MPQR_ALGORITHM_TSQR = 2,
} MpqrAlgorithm;

typedef enum MpqrRegime {
  // Everything in `precision`.
  MPQR_REGIME_UNIFORM = 0,
  // Mixed inner products, everything else in `low`.
  MPQR_REGIME_MIXED2 = 1,
  // High-precision panels with block-FMA updates; not available for HQR.
  MPQR_REGIME_MIXED3 = 2,
  // Uniform in `high`, factors cast down to `low`.
  MPQR_REGIME_CASTDOWN = 3,
} MpqrRegime;

typedef enum MpqrFormat {
  MPQR_FORMAT_FP16 = 0,
  MPQR_FORMAT_FP32 = 1,
  MPQR_FORMAT_FP64 = 2,
} MpqrFormat;

typedef enum MpqrPolicy {
  MPQR_POLICY_SIGNAL = 0,
  MPQR_POLICY_SATURATE = 1,
} MpqrPolicy;

// Opaque result of [`mpqr_factor`].
typedef struct MpqrFactorization MpqrFactorization;

// Opaque dense matrix.
typedef struct MpqrMatrix MpqrMatrix;

// Algorithm and arithmetic selection.
typedef struct MpqrMethod {
  enum MpqrAlgorithm algorithm;
  // Block size, BQR only.
  size_t block_size;
  // Tree levels, TSQR only.
  uint32_t levels;
  enum MpqrRegime regime;
  // Working precision of the uniform regime.
  enum MpqrFormat precision;
  enum MpqrFormat low;
  enum MpqrFormat high;
} MpqrMethod;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the
// next failing call on the same thread.
const char *mpqr_last_error_message(void);

// Copies `rows * cols` column-major values into a new matrix.
//
// # Safety
// `data` must point to `rows * cols` readable doubles; `out` must be writable.
enum MpqrStatus mpqr_matrix_new(size_t rows,
                                size_t cols,
                                const double *data,
                                struct MpqrMatrix **out);

// # Safety
// `m` must be null or a matrix from [`mpqr_matrix_new`] not yet freed.
void mpqr_matrix_free(struct MpqrMatrix *m);

// Row count, or 0 for null.
//
// # Safety
// `m` must be null or a live matrix.
size_t mpqr_matrix_rows(const struct MpqrMatrix *m);

// Column count, or 0 for null.
//
// # Safety
// `m` must be null or a live matrix.
size_t mpqr_matrix_cols(const struct MpqrMatrix *m);

// Copies the entries column-major into `out`, which holds `len` doubles.
//
// # Safety
// `m` must be a live matrix; `out` must be writable for `len` doubles.
enum MpqrStatus mpqr_matrix_copy(const struct MpqrMatrix *m, double *out, size_t len);

// Factors `a`; the result is released with [`mpqr_factorization_free`].
//
// # Safety
// `a` and `method` must be live; `out` must be writable.
enum MpqrStatus mpqr_factor(const struct MpqrMatrix *a,
                            const struct MpqrMethod *method,
                            enum MpqrPolicy policy,
                            struct MpqrFactorization **out);

// The thin `Q`, owned by `f`.
//
// # Safety
// `f` must be null or a live factorization.
const struct MpqrMatrix *mpqr_factorization_q(const struct MpqrFactorization *f);

// The square `R`, owned by `f`.
//
// # Safety
// `f` must be null or a live factorization.
const struct MpqrMatrix *mpqr_factorization_r(const struct MpqrFactorization *f);

// Values clamped under the saturate policy.
//
// # Safety
// `f` must be null or a live factorization.
size_t mpqr_factorization_saturations(const struct MpqrFactorization *f);

// Relative backward error `‖A - QR‖_F / ‖A‖_F` and `‖QᵀQ - I‖_2`, in `f64`.
//
// # Safety
// `a` and `f` must be live; the outputs must be writable.
enum MpqrStatus mpqr_factorization_errors(const struct MpqrMatrix *a,
                                          const struct MpqrFactorization *f,
                                          double *backward,
                                          double *orth);

// # Safety
// `f` must be null or a factorization from [`mpqr_factor`] not yet freed.
void mpqr_factorization_free(struct MpqrFactorization *f);

// Normwise bound on `‖ΔQ‖_F` for an `m x n` factorization with constant `c`.
//
// # Safety
// `method` must be live; `value` and `stable` must be writable.
enum MpqrStatus mpqr_bound_q(const struct MpqrMethod *method,
                             size_t m,
                             size_t n,
                             double c,
                             double *value,
                             bool *stable);

// `γ = c k u / (1 - c k u)`; fails with `Domain` when `c k u >= 1`.
//
// # Safety
// `out` must be writable.
enum MpqrStatus mpqr_gamma(double k, double u, double c, double *out);

// Rounds `x` to the nearest member of `format`, ties to even.
//
// # Safety
// `out` must be writable.
enum MpqrStatus mpqr_round_to_format(double x,
                                     enum MpqrFormat format,
                                     enum MpqrPolicy policy,
                                     double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MPQR_H */
