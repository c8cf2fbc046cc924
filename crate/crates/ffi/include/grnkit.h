#ifndef GRNKIT_H
#define GRNKIT_H

#include <stddef.h>
#include <stdint.h>

typedef enum GrnkitStatus {
  GRNKIT_STATUS_OK = 0,
  GRNKIT_STATUS_NULL_POINTER = 1,
  GRNKIT_STATUS_INVALID_ARGUMENT = 2,
  GRNKIT_STATUS_IO = 3,
  GRNKIT_STATUS_GRN = 4,
  GRNKIT_STATUS_DATA = 5,
  GRNKIT_STATUS_METRIC = 6,
  GRNKIT_STATUS_PARSE = 7,
  GRNKIT_STATUS_PANIC = 99,
} GrnkitStatus;

/**
 * GRN handle.
 */
typedef struct GrnkitGrn GrnkitGrn;

/**
 * Expression matrix handle.
 */
typedef struct GrnkitMatrix GrnkitMatrix;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *grnkit_last_error(void);

const char *grnkit_version(void);

/**
 * Uniformly random GRN with exactly `k` regulators per target.
 *
 * # Safety
 * `tfs` and `targets` point to arrays of `n_tfs` / `n_targets` NUL-terminated
 * strings; `out` is writable.
 */
enum GrnkitStatus grnkit_grn_random(const char *const *tfs,
                                    size_t n_tfs,
                                    const char *const *targets,
                                    size_t n_targets,
                                    size_t k,
                                    uint64_t seed,
                                    struct GrnkitGrn **out);

/**
 * Reads a `TF\ttarget` edge list and its JSON sidecar.
 *
 * # Safety
 * `path` is a NUL-terminated string; `out` is writable.
 */
enum GrnkitStatus grnkit_grn_read(const char *path, struct GrnkitGrn **out);

/**
 * # Safety
 * `grn` is a live handle; `path` is a NUL-terminated string.
 */
enum GrnkitStatus grnkit_grn_write(const struct GrnkitGrn *grn, const char *path);

/**
 * Edges per possible TF→target pair: `k / n_tfs`. NaN for a null handle.
 *
 * # Safety
 * `grn` is null or a live handle.
 */
double grnkit_grn_density(const struct GrnkitGrn *grn);

/**
 * # Safety
 * `grn` is null or a live handle.
 */
size_t grnkit_grn_n_edges(const struct GrnkitGrn *grn);

/**
 * Fraction of edges of `a` also present in `b`.
 *
 * # Safety
 * `a` and `b` are live handles; `out` is writable.
 */
enum GrnkitStatus grnkit_grn_overlap(const struct GrnkitGrn *a,
                                     const struct GrnkitGrn *b,
                                     double *out);

/**
 * # Safety
 * `grn` is null or a handle not yet freed.
 */
void grnkit_grn_free(struct GrnkitGrn *grn);

/**
 * Loads a matrix; `format` is 0 for CSV, 1 for Matrix Market.
 *
 * # Safety
 * `path` is a NUL-terminated string; `out` is writable.
 */
enum GrnkitStatus grnkit_matrix_load(const char *path, uint32_t format, struct GrnkitMatrix **out);

/**
 * Builds a raw-count matrix from row-major `n_cells × n_genes` values.
 *
 * # Safety
 * `values` holds `n_cells * n_genes` doubles, `genes` holds `n_genes`
 * NUL-terminated strings; `out` is writable.
 */
enum GrnkitStatus grnkit_matrix_from_dense(const double *values,
                                           size_t n_cells,
                                           size_t n_genes,
                                           const char *const *genes,
                                           struct GrnkitMatrix **out);

/**
 * # Safety
 * `m` is null or a live handle.
 */
size_t grnkit_matrix_n_cells(const struct GrnkitMatrix *m);

/**
 * # Safety
 * `m` is null or a live handle.
 */
size_t grnkit_matrix_n_genes(const struct GrnkitMatrix *m);

/**
 * # Safety
 * `m` is null or a handle not yet freed.
 */
void grnkit_matrix_free(struct GrnkitMatrix *m);

/**
 * Cosine distance between the centroids of `r` and `s`.
 *
 * # Safety
 * `r`, `s` are live handles; `out` is writable.
 */
enum GrnkitStatus grnkit_cosine_distance(const struct GrnkitMatrix *r,
                                         const struct GrnkitMatrix *s,
                                         double *out);

/**
 * Euclidean distance between the centroids of `r` and `s`.
 *
 * # Safety
 * `r`, `s` are live handles; `out` is writable.
 */
enum GrnkitStatus grnkit_euclidean_distance(const struct GrnkitMatrix *r,
                                            const struct GrnkitMatrix *s,
                                            double *out);

/**
 * Biased MMD² with RBF kernels. `n_bandwidths == 0` selects the median
 * heuristic.
 *
 * # Safety
 * `r`, `s` are live handles; `bandwidths` holds `n_bandwidths` doubles;
 * `out` is writable.
 */
enum GrnkitStatus grnkit_mmd(const struct GrnkitMatrix *r,
                             const struct GrnkitMatrix *s,
                             const double *bandwidths,
                             size_t n_bandwidths,
                             double *out);

/**
 * Rank-based AUROC; `labels[i]` nonzero marks a positive.
 *
 * # Safety
 * `scores` and `labels` hold `n` elements; `out` is writable.
 */
enum GrnkitStatus grnkit_auroc(const double *scores, const uint8_t *labels, size_t n, double *out);

/**
 * Parses an `<Answer> [..] </Answer>` reply into newline-separated symbols.
 * Release the string with [`grnkit_string_free`].
 *
 * # Safety
 * `raw` is a NUL-terminated string; `out` is writable.
 */
enum GrnkitStatus grnkit_parse_answer(const char *raw, char **out);

/**
 * # Safety
 * `s` is null or a string returned by this library and not yet freed.
 */
void grnkit_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GRNKIT_H */
