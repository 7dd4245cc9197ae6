#ifndef POLARMIX_H
#define POLARMIX_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PmStatus {
  PM_STATUS_OK = 0,
  PM_STATUS_INVALID_ARGUMENT = 1,
  PM_STATUS_DOMAIN = 2,
  PM_STATUS_SHAPE = 3,
  PM_STATUS_UNDECODABLE = 4,
  PM_STATUS_IO = 5,
  PM_STATUS_PARSE = 6,
  PM_STATUS_NULL_POINTER = 7,
  PM_STATUS_BUFFER_TOO_SMALL = 8,
  PM_STATUS_INTERNAL = 9,
} PmStatus;

typedef enum PmScheme {
  PM_SCHEME_UNCODED = 0,
  PM_SCHEME_REPETITION = 1,
  PM_SCHEME_MDS = 2,
} PmScheme;

typedef struct PmDistribution PmDistribution;

typedef struct PmFrozenSet PmFrozenSet;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copy the calling thread's last error message into `buf`.
//
// # Safety
// `buf` must be null or point to `len` writable bytes; `needed` must be
// null or writable.
enum PmStatus pm_last_error(char *buf, size_t len, size_t *needed);

// # Safety
// `result` must be writable.
enum PmStatus pm_distribution_uniform(double a, double b, struct PmDistribution **result);

// # Safety
// `result` must be writable.
enum PmStatus pm_distribution_exponential(double mean, struct PmDistribution **result);

// Parse a distribution JSON document.
//
// # Safety
// `json` must be a NUL-terminated string; `result` must be writable.
enum PmStatus pm_distribution_from_json(const char *json, struct PmDistribution **result);

// Empirical law of `len` samples.
//
// # Safety
// `samples` must point to `len` doubles; `result` must be writable.
enum PmStatus pm_distribution_from_samples(const double *samples,
                                           size_t len,
                                           struct PmDistribution **result);

// # Safety
// `d` must be null or a handle from this library, not yet freed.
void pm_distribution_free(struct PmDistribution *d);

// # Safety
// `d` must be a live handle; `value` must be writable.
enum PmStatus pm_distribution_cdf(const struct PmDistribution *d, double t, double *value);

// # Safety
// `d` must be a live handle; `value` must be writable.
enum PmStatus pm_distribution_quantile(const struct PmDistribution *d, double u, double *value);

// # Safety
// `d` must be a live handle; `value` must be writable.
enum PmStatus pm_distribution_mean(const struct PmDistribution *d, double *value);

// `E[e^{λT}]`.
//
// # Safety
// `d` must be a live handle; `value` must be writable.
enum PmStatus pm_distribution_laplace(const struct PmDistribution *d, double lambda, double *value);

// `F_{n,index}(t)` of the depth-`depth` virtual worker `index`.
//
// # Safety
// `d` must be a live handle; `value` must be writable.
enum PmStatus pm_leaf_cdf(const struct PmDistribution *d,
                          size_t depth,
                          size_t index,
                          double t,
                          double *value);

// Frozen set keeping the `⌊rate · 2^depth⌋` indices most likely finished
// by the `rate` quantile.
//
// # Safety
// `d` must be a live handle; `result` must be writable.
enum PmStatus pm_frozen_quantile(const struct PmDistribution *d,
                                 size_t depth,
                                 double rate,
                                 struct PmFrozenSet **result);

// # Safety
// `d` must be a live handle; `result` must be writable.
enum PmStatus pm_frozen_laplace(const struct PmDistribution *d,
                                size_t depth,
                                double rate,
                                double lambda,
                                struct PmFrozenSet **result);

// # Safety
// `frozen` must point to `len` indices; `result` must be writable.
enum PmStatus pm_frozen_manual(size_t depth,
                               const size_t *frozen,
                               size_t len,
                               struct PmFrozenSet **result);

// # Safety
// `json` must be a NUL-terminated string; `result` must be writable.
enum PmStatus pm_frozen_from_json(const char *json, struct PmFrozenSet **result);

// Serialize to JSON. `needed` receives the buffer size including the NUL
// even when `buf` is too small.
//
// # Safety
// `f` must be a live handle; `buf` must be null or hold `len` bytes.
enum PmStatus pm_frozen_to_json(const struct PmFrozenSet *f, char *buf, size_t len, size_t *needed);

// # Safety
// `f` must be a live handle; the outputs must be writable.
enum PmStatus pm_frozen_info(const struct PmFrozenSet *f, size_t *workers, size_t *data_blocks);

// Write 1 for frozen and 0 for data indices into `mask[0..workers]`.
//
// # Safety
// `f` must be a live handle; `mask` must hold `len` bytes.
enum PmStatus pm_frozen_mask(const struct PmFrozenSet *f, uint8_t *mask, size_t len);

// # Safety
// `f` must be null or a live handle.
void pm_frozen_free(struct PmFrozenSet *f);

// Union bound on `P[decode time > t]`.
//
// # Safety
// Handles must be live; `value` must be writable.
enum PmStatus pm_failure_bound(const struct PmDistribution *d,
                               const struct PmFrozenSet *f,
                               double t,
                               double *value);

// Virtual runtimes by family index.
//
// # Safety
// `physical` and `virtual_out` must each hold `len` doubles.
enum PmStatus pm_virtual_runtimes(const double *physical, size_t len, double *virtual_out);

// # Safety
// `f` must be a live handle; `physical` must hold `len` doubles.
enum PmStatus pm_decode_time(const struct PmFrozenSet *f,
                             const double *physical,
                             size_t len,
                             double *value);

// Encode `K` row-major `rows × cols` data blocks into `N` coded blocks.
//
// # Safety
// `data` must hold `K · rows · cols` doubles and `coded` `N · rows · cols`.
enum PmStatus pm_encode(const struct PmFrozenSet *f,
                        const double *data,
                        size_t rows,
                        size_t cols,
                        double *coded);

// Decode worker results. `present[i]` is nonzero when worker `i`
// returned; `times` may be null, in which case returned workers count as
// finishing at time 0. Recovered data blocks go to `data` and the decode
// time to `time` (if non-null).
//
// # Safety
// `results` must hold `N · rows · cols` doubles, `present` `N` bytes,
// `times` null or `N` doubles, `data` `K · rows · cols` doubles.
enum PmStatus pm_decode(const struct PmFrozenSet *f,
                        const double *results,
                        const uint8_t *present,
                        const double *times,
                        size_t rows,
                        size_t cols,
                        double *data,
                        double *time);

// Closed-form scheme CDF given `z = F(t)`.
//
// # Safety
// `value` must be writable.
enum PmStatus pm_scheme_cdf(enum PmScheme scheme,
                            double z,
                            size_t workers,
                            size_t data_blocks,
                            double *value);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* POLARMIX_H */
