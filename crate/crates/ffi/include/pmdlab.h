#ifndef PMDLAB_H
#define PMDLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum PmdStatus {
  PMD_STATUS_OK = 0,
  PMD_STATUS_NULL_POINTER = 1,
  PMD_STATUS_INVALID_ARGUMENT = 2,
  PMD_STATUS_PARSE = 3,
  PMD_STATUS_SUPPORT_CAP_EXCEEDED = 4,
  PMD_STATUS_COVER_CAP_EXCEEDED = 5,
  PMD_STATUS_PRECONDITION = 6,
  PMD_STATUS_TOURNAMENT_FAILURE = 7,
  PMD_STATUS_IO = 8,
  PMD_STATUS_PANIC = 9,
} PmdStatus;

/**
 * A learned or decomposed distribution.
 */
typedef struct PmdHypothesis PmdHypothesis;

/**
 * A parameter matrix.
 */
typedef struct PmdMatrix PmdMatrix;

/**
 * A tabulated pmf.
 */
typedef struct PmdPmf PmdPmf;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the next call.
 */
const char *pmd_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *pmd_version(void);

/**
 * Build an `n×k` matrix from row-major probabilities.
 *
 * # Safety
 * `rows` must point to `n*k` doubles and `out` must be writable.
 */
enum PmdStatus pmd_matrix_new(size_t k, size_t n, const double *rows, struct PmdMatrix **out);

/**
 * Parse a matrix from its JSON document.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` writable.
 */
enum PmdStatus pmd_matrix_from_json(const char *json, struct PmdMatrix **out);

/**
 * # Safety
 * `m` must come from this library and not be freed twice.
 */
void pmd_matrix_free(struct PmdMatrix *m);

/**
 * Rows and columns of a matrix.
 *
 * # Safety
 * `m` must be a live handle; `n` and `k` writable or null.
 */
enum PmdStatus pmd_matrix_shape(const struct PmdMatrix *m, size_t *n, size_t *k);

/**
 * Exact pmf of the PMD.
 *
 * # Safety
 * `m` must be a live handle and `out` writable.
 */
enum PmdStatus pmd_pmf_exact(const struct PmdMatrix *m, struct PmdPmf **out);

/**
 * Exact pmf of `Σ_j j·X_j`, the SIIRV with the matrix rows as summand laws.
 *
 * # Safety
 * `m` must be a live handle and `out` writable.
 */
enum PmdStatus pmd_siirv_pmf_exact(const struct PmdMatrix *m, struct PmdPmf **out);

/**
 * Probability of the point `x[0..len]`.
 *
 * # Safety
 * `p` must be a live handle, `x` must point to `len` integers and `out` be writable.
 */
enum PmdStatus pmd_pmf_prob(const struct PmdPmf *p, const int64_t *x, size_t len, double *out);

/**
 * Number of stored support points.
 *
 * # Safety
 * `p` must be a live handle or null (returns 0).
 */
size_t pmd_pmf_len(const struct PmdPmf *p);

/**
 * # Safety
 * `p` must come from this library and not be freed twice.
 */
void pmd_pmf_free(struct PmdPmf *p);

/**
 * Total variation distance.
 *
 * # Safety
 * `a`, `b` must be live handles and `out` writable.
 */
enum PmdStatus pmd_tv_distance(const struct PmdPmf *a, const struct PmdPmf *b, double *out);

/**
 * Structural decomposition with constants `(c, t, gamma)`; any non-positive
 * constant takes its desk default. Writes the TV ledger total if requested.
 *
 * # Safety
 * `m` must be a live handle, `out` writable, `ledger_total` writable or null.
 */
enum PmdStatus pmd_decompose(const struct PmdMatrix *m,
                             double c,
                             double t,
                             double gamma,
                             struct PmdHypothesis **out,
                             double *ledger_total);

/**
 * Learn a `k`-SIIRV from `m` samples, resampled with replacement as the oracle.
 *
 * # Safety
 * `samples` must point to `m` integers and `out` be writable.
 */
enum PmdStatus pmd_learn_siirv(const int64_t *samples,
                               size_t m,
                               size_t k,
                               double eps,
                               double delta,
                               uint64_t seed,
                               struct PmdHypothesis **out);

/**
 * Learn a PMD from `m` row-major `k`-dimensional samples, resampled with replacement.
 *
 * # Safety
 * `samples` must point to `m*k` integers and `out` be writable.
 */
enum PmdStatus pmd_learn_pmd(const int64_t *samples,
                             size_t m,
                             size_t k,
                             double eps,
                             double delta,
                             uint64_t seed,
                             struct PmdHypothesis **out);

/**
 * Hypothesis probability at `x[0..len]`.
 *
 * # Safety
 * `h` must be a live handle, `x` point to `len` integers, `out` writable.
 */
enum PmdStatus pmd_hypothesis_pmf(const struct PmdHypothesis *h,
                                  const int64_t *x,
                                  size_t len,
                                  double *out);

/**
 * Tabulate a hypothesis.
 *
 * # Safety
 * `h` must be a live handle and `out` writable.
 */
enum PmdStatus pmd_hypothesis_tabulate(const struct PmdHypothesis *h, struct PmdPmf **out);

/**
 * JSON document of a hypothesis; release with [`pmd_string_free`].
 *
 * # Safety
 * `h` must be a live handle and `out` writable.
 */
enum PmdStatus pmd_hypothesis_to_json(const struct PmdHypothesis *h, char **out);

/**
 * # Safety
 * `h` must come from this library and not be freed twice.
 */
void pmd_hypothesis_free(struct PmdHypothesis *h);

/**
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void pmd_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PMDLAB_H */
