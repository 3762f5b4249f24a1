#ifndef STEREOUNIF_H
#define STEREOUNIF_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes.
 */
typedef enum SuStatus {
  SU_STATUS_OK = 0,
  /**
   * An argument was outside the domain of the function.
   */
  SU_STATUS_DOMAIN = 1,
  SU_STATUS_CONFIG = 2,
  SU_STATUS_SINGULAR_KERNEL = 3,
  /**
   * Two sample points coincide or are antipodal.
   */
  SU_STATUS_TIE = 4,
  /**
   * The asymptotic series does not exist (q = 2 untruncated).
   */
  SU_STATUS_NON_SUMMABLE = 5,
  SU_STATUS_QUADRATURE = 6,
  SU_STATUS_DERIVATIVE_ORDER = 7,
  SU_STATUS_ENVELOPE = 8,
  SU_STATUS_OVERFLOW = 9,
  SU_STATUS_INFEASIBLE = 10,
  SU_STATUS_PARSE = 11,
  SU_STATUS_CACHE = 12,
  SU_STATUS_IO = 13,
  SU_STATUS_NULL_POINTER = 14,
  /**
   * An internal panic was caught at the boundary.
   */
  SU_STATUS_PANIC = 15,
} SuStatus;

/**
 * Null distribution of a statistic (opaque).
 */
typedef struct SuNullModel SuNullModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len` bytes) and returns the full message length excluding
 * the terminator. Returns 0 when there is no error. `buf` may be null to
 * query the length.
 *
 * # Safety
 * `buf` must be null or valid for writes of `len` bytes.
 */
size_t su_last_error_message(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *su_version(void);

/**
 * Stereographic statistic `T_n(a)`.
 *
 * # Safety
 * `points` must be valid for `n * (q + 1)` reads; `out` for one write.
 */
enum SuStatus su_stat_tn(const double *points, size_t n, size_t q, double a, double *out);

/**
 * Truncated statistic `T_{n,K}(a)` with `truncation >= 1` harmonics.
 *
 * # Safety
 * As for [`su_stat_tn`].
 */
enum SuStatus su_stat_tnk(const double *points,
                          size_t n,
                          size_t q,
                          double a,
                          size_t truncation,
                          double *out);

/**
 * Rayleigh statistic.
 *
 * # Safety
 * As for [`su_stat_tn`].
 */
enum SuStatus su_stat_rayleigh(const double *points, size_t n, size_t q, double *out);

/**
 * Bingham statistic.
 *
 * # Safety
 * As for [`su_stat_tn`].
 */
enum SuStatus su_stat_bingham(const double *points, size_t n, size_t q, double *out);

/**
 * Gegenbauer coefficient `b_k` of the kernel with parameter `a` on `S^q`.
 *
 * # Safety
 * `out` must be valid for one write.
 */
enum SuStatus su_gegenbauer_coef(size_t k, size_t q, double a, double *out);

/**
 * Sobolev weight `w_k`.
 *
 * # Safety
 * `out` must be valid for one write.
 */
enum SuStatus su_sobolev_weight(size_t k, size_t q, double a, double *out);

/**
 * Null expectation of the kernel between two independent uniform points.
 *
 * # Safety
 * `out` must be valid for one write.
 */
enum SuStatus su_expected_h0(size_t q, double a, double *out);

/**
 * Fills `out` (length `n * (q + 1)`) with `n` uniform points on `S^q`.
 *
 * # Safety
 * `out` must be valid for `n * (q + 1)` writes.
 */
enum SuStatus su_sample_uniform(size_t q, size_t n, uint64_t seed, double *out);

/**
 * Asymptotic null distribution of `T_n(a)` (`truncation = 0`) or
 * `T_{n,K}(a)` from `m` series draws. Release with [`su_null_model_free`].
 *
 * # Safety
 * `out` must be valid for one write.
 */
enum SuStatus su_null_model_asymptotic(size_t q,
                                       double a,
                                       size_t truncation,
                                       size_t m,
                                       uint64_t seed,
                                       struct SuNullModel **out);

/**
 * Exact-n Monte Carlo null distribution from `m` uniform samples of size
 * `n`. Release with [`su_null_model_free`].
 *
 * # Safety
 * `out` must be valid for one write.
 */
enum SuStatus su_null_model_exact(size_t q,
                                  double a,
                                  size_t truncation,
                                  size_t n,
                                  size_t m,
                                  uint64_t seed,
                                  struct SuNullModel **out);

/**
 * Monte Carlo p-value `(1 + #{draws >= t}) / (m + 1)`.
 *
 * # Safety
 * `model` must come from a constructor above and not be freed; `out` must
 * be valid for one write.
 */
enum SuStatus su_null_model_p_value(const struct SuNullModel *model, double t, double *out);

/**
 * Upper-`alpha` critical value. `undersampled` (may be null) is set to 1
 * when fewer than 10 draws lie beyond it.
 *
 * # Safety
 * As for [`su_null_model_p_value`]; `undersampled` null or valid for one write.
 */
enum SuStatus su_null_model_critical_value(const struct SuNullModel *model,
                                           double alpha,
                                           double *out,
                                           int32_t *undersampled);

/**
 * Number of draws held by the model (0 for a null handle).
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t su_null_model_draw_count(const struct SuNullModel *model);

/**
 * Releases a model. Null is a no-op.
 *
 * # Safety
 * `model` must be null or a live handle not used afterwards.
 */
void su_null_model_free(struct SuNullModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STEREOUNIF_H */
