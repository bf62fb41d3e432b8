#ifndef MLDEGREE_H
#define MLDEGREE_H

#include <stddef.h>
#include <stdint.h>

typedef enum MldMode {
  MLD_MODE_ML = 0,
  MLD_MODE_REML = 1,
} MldMode;

// Result of every fallible call.
typedef enum MldStatus {
  MLD_STATUS_OK = 0,
  MLD_STATUS_DIMENSION = 1,
  MLD_STATUS_RANK_DEFICIENT = 2,
  MLD_STATUS_INVALID_MODEL = 3,
  MLD_STATUS_NOT_SYMMETRIC = 4,
  MLD_STATUS_NEGATIVE_EIGENVALUE = 5,
  MLD_STATUS_NO_NULL_EIGENVALUE = 6,
  MLD_STATUS_INVALID_VARIANCE = 7,
  MLD_STATUS_VANISHING_STATISTICS = 8,
  MLD_STATUS_SPURIOUS_POINT = 9,
  MLD_STATUS_ZERO_POLYNOMIAL = 10,
  MLD_STATUS_CONSTANT_POLYNOMIAL = 11,
  MLD_STATUS_NO_CONVERGENCE = 12,
  MLD_STATUS_DEGENERATE_SPECTRUM = 13,
  MLD_STATUS_NOT_GENERIC = 14,
  MLD_STATUS_DATA_IN_MEAN_SPACE = 15,
  MLD_STATUS_INPUT = 16,
  MLD_STATUS_NULL_POINTER = 17,
  // The estimate does not exist for these data; the fit handle is still valid.
  MLD_STATUS_NONEXISTENT = 18,
  MLD_STATUS_PANIC = 19,
} MldStatus;

// Opaque fit handle.
typedef struct MldFit MldFit;

// Opaque model handle.
typedef struct MldModel MldModel;

// Summary of a degree experiment.
typedef struct MldDegreeSummary {
  uint64_t max_count;
  uint64_t max_degree;
  uint64_t bound;
  uint64_t spectral_bound;
  uint64_t violations;
  uint64_t degenerate_replicates;
} MldDegreeSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Status of the last failed call on this thread, or `Ok`.
enum MldStatus mld_last_error_code(void);

// Copies the last error message (NUL-terminated, truncated to `len`) into
// `buf` and returns the full message length excluding the terminator.
//
// # Safety
// `buf` must be null or writable for `len` bytes.
size_t mld_last_error_message(char *buf, size_t len);

// Builds a model from `X` (`n x p`) and `V` (`n x n`), both row-major.
//
// # Safety
// `x` must hold `n * p` values, `v` `n * n` values; `out` must be writable.
enum MldStatus mld_model_new_dense(size_t n,
                                   size_t p,
                                   const double *x,
                                   const double *v,
                                   struct MldModel **out);

// Builds a one-way layout with consecutive groups. `w` is the row-major
// `n x p` mean design; pass null for `W = 1_n` (then `p` is ignored).
//
// # Safety
// `sizes` must hold `q` values; `w` must be null or hold `n * p` values.
enum MldStatus mld_model_new_one_way(const size_t *sizes,
                                     size_t q,
                                     const double *w,
                                     size_t p,
                                     struct MldModel **out);

// # Safety
// `model` must be null or a handle from a `mld_model_new_*` call, freed once.
void mld_model_free(struct MldModel *model);

// # Safety
// `model` must be a live handle or null (returns 0).
size_t mld_model_n(const struct MldModel *model);

// # Safety
// `model` must be a live handle or null (returns 0).
size_t mld_model_p(const struct MldModel *model);

// Fits the model to `y` (length `n`). Writes a fit handle to `out` when the
// status is `Ok` or `Nonexistent`.
//
// # Safety
// `model` must be live, `y` must hold `n` values, `out` must be writable.
enum MldStatus mld_fit(const struct MldModel *model,
                       const double *y,
                       size_t n,
                       enum MldMode mode,
                       struct MldFit **out);

// # Safety
// `fit` must be null or a handle from [`mld_fit`], freed once.
void mld_fit_free(struct MldFit *fit);

// 1 if an estimate exists, 0 otherwise (including a null handle).
//
// # Safety
// `fit` must be live or null.
int32_t mld_fit_exists(const struct MldFit *fit);

// # Safety
// `fit` must be live; `sigma1_sq` and `sigma2_sq` must be writable.
enum MldStatus mld_fit_s_hat(const struct MldFit *fit, double *sigma1_sq, double *sigma2_sq);

// # Safety
// `fit` must be live; `out` must be writable.
enum MldStatus mld_fit_loglik(const struct MldFit *fit, double *out);

// Copies the GLS coefficients into `out` (capacity `len`, at least `p`).
//
// # Safety
// `fit` must be live; `out` must be writable for `len` values.
enum MldStatus mld_fit_beta(const struct MldFit *fit, double *out, size_t len);

// Number of candidate critical points (all classes).
//
// # Safety
// `fit` must be live or null.
size_t mld_fit_candidate_count(const struct MldFit *fit);

// Number of interior real critical points.
//
// # Safety
// `fit` must be live or null.
size_t mld_fit_interior_count(const struct MldFit *fit);

// Degree of the `rho`-polynomial, or -1 when none was built.
//
// # Safety
// `fit` must be live or null.
int64_t mld_fit_poly_degree(const struct MldFit *fit);

// The full fit document as a JSON string; release with [`mld_string_free`].
// Returns null on a null handle.
//
// # Safety
// `fit` must be live or null.
char *mld_fit_to_json(const struct MldFit *fit);

// # Safety
// `s` must be null or a string returned by this library, freed once.
void mld_string_free(char *s);

// Draws `y` (written to `y_out`, capacity `n`) from the model.
//
// # Safety
// `model` must be live; `beta` must hold `p` values (or be null for zero);
// `y_out` must be writable for `n` values.
enum MldStatus mld_simulate(const struct MldModel *model,
                            const double *beta,
                            size_t p,
                            double sigma1_sq,
                            double sigma2_sq,
                            uint64_t seed,
                            double *y_out,
                            size_t n);

// Runs a degree experiment with standard normal replicates.
//
// # Safety
// `model` must be live; `out` must be writable.
enum MldStatus mld_degree_experiment(const struct MldModel *model,
                                     enum MldMode mode,
                                     uint64_t replicates,
                                     uint64_t seed,
                                     struct MldDegreeSummary *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MLDEGREE_H */
