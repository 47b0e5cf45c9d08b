#ifndef PCLFPCA_H
#define PCLFPCA_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

#define PCLFPCA_OK 0

#define PCLFPCA_ERR_NULL 1

#define PCLFPCA_ERR_VALIDATION 2

#define PCLFPCA_ERR_NUMERICAL 3

#define PCLFPCA_ERR_PANIC 4

/**
 * Opaque functional dataset (curves on a shared grid).
 */
typedef struct Dataset Dataset;

/**
 * Opaque fitted model: the fPCA basis plus posterior draws.
 */
typedef struct Fit Fit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the calling thread's last error message into `buf` (NUL-terminated,
 * truncated to `len` bytes). Returns the full message length in bytes.
 */
uintptr_t pclfpca_last_error(char *buf, uintptr_t len);

/**
 * Load a CSV dataset (rows = curves). Returns NULL on failure.
 */
struct Dataset *pclfpca_dataset_load(const char *path);

int32_t pclfpca_dataset_shape(const struct Dataset *dataset,
                              uintptr_t *n_curves,
                              uintptr_t *n_points);

void pclfpca_dataset_free(struct Dataset *dataset);

/**
 * Smooth, decompose into `k` eigendimensions and run the Gibbs sampler.
 * `standard_mode != 0` fits the single-cluster zero-mean variant.
 * Returns NULL on failure.
 */
struct Fit *pclfpca_fit(const struct Dataset *dataset,
                        uintptr_t k,
                        uintptr_t burn_in,
                        uintptr_t iterations,
                        uintptr_t thinning,
                        uintptr_t chains,
                        uint64_t seed,
                        int32_t standard_mode);

/**
 * Number of retained eigendimensions of a fit.
 */
uintptr_t pclfpca_fit_dims(const struct Fit *fit);

/**
 * Write the posterior-mode partition of eigendimension `dim` into `labels`
 * (capacity `len`, needs one slot per curve).
 */
int32_t pclfpca_fit_map_partition(const struct Fit *fit,
                                  uintptr_t dim,
                                  uintptr_t *labels,
                                  uintptr_t len);

/**
 * Mean split-chain PSRF over the monitored scalar parameters.
 */
int32_t pclfpca_fit_mean_psrf(const struct Fit *fit, double *out);

/**
 * Persist the fit (draw files, manifest, basis) into a directory.
 */
int32_t pclfpca_fit_save(const struct Fit *fit, const char *dir);

void pclfpca_fit_free(struct Fit *fit);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PCLFPCA_H */
