#ifndef SEGDISCOVER_H
#define SEGDISCOVER_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SdMatching {
  SD_MATCHING_MAJORITY = 0,
  SD_MATCHING_HUNGARIAN = 1,
} SdMatching;

typedef enum SdStatus {
  SD_STATUS_OK = 0,
  SD_STATUS_NULL_POINTER = 1,
  SD_STATUS_INVALID_ARGUMENT = 2,
  SD_STATUS_IO = 3,
  SD_STATUS_FORMAT = 4,
  SD_STATUS_DIMENSION_MISMATCH = 5,
  SD_STATUS_DIVERGED = 6,
  SD_STATUS_PANIC = 7,
} SdStatus;

/**
 * Overcluster and concept label per embedding row.
 */
typedef struct SdClustering SdClustering;

/**
 * Embedding rows keyed by `(image_id, primitive_id)`.
 */
typedef struct SdEmbeddings SdEmbeddings;

/**
 * A trained refiner.
 */
typedef struct SdRefiner SdRefiner;

/**
 * A working directory with its configuration.
 */
typedef struct SdRun SdRun;

/**
 * Summary scores of one evaluation.
 */
typedef struct SdMetrics {
  double miou;
  double wiou;
  double pacc;
} SdMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` as a
 * NUL-terminated string, truncating to `capacity`. Returns the length the
 * full message needs including its terminator; 1 means no error.
 *
 * # Safety
 * `buf` is null or points to `capacity` writable bytes.
 */
size_t sd_last_error(char *buf, size_t capacity);

/**
 * Library version as a static NUL-terminated string.
 */
const char *sd_version(void);

/**
 * Minimum segment size for an image of the given size.
 */
size_t sd_dynamic_min_size(size_t height, size_t width);

/**
 * Segments an interleaved RGB image into superpixels. Writes one label
 * per pixel to `labels_out` and the segment count to `count_out`.
 *
 * # Safety
 * `rgb` holds `height * width * 3` bytes, `labels_out` has room for
 * `height * width` values, `count_out` is writable.
 */
enum SdStatus sd_felzenszwalb(const uint8_t *rgb,
                              size_t height,
                              size_t width,
                              double scale,
                              double sigma,
                              size_t min_size,
                              uint32_t *labels_out,
                              size_t *count_out);

/**
 * Reads an embedding file.
 *
 * # Safety
 * `path` is a NUL-terminated string; `out` is writable.
 */
enum SdStatus sd_embeddings_read(const char *path, struct SdEmbeddings **out);

/**
 * Builds embeddings from `rows` keys and a row-major `rows × dim` matrix.
 *
 * # Safety
 * `image_ids` and `primitive_ids` hold `rows` values, `data` holds
 * `rows * dim` values, `out` is writable.
 */
enum SdStatus sd_embeddings_new(size_t rows,
                                size_t dim,
                                const uint32_t *image_ids,
                                const uint32_t *primitive_ids,
                                const float *data,
                                struct SdEmbeddings **out);

/**
 * Number of rows; 0 for null.
 *
 * # Safety
 * `emb` is null or a live handle.
 */
size_t sd_embeddings_len(const struct SdEmbeddings *emb);

/**
 * Row dimension; 0 for null.
 *
 * # Safety
 * `emb` is null or a live handle.
 */
size_t sd_embeddings_dim(const struct SdEmbeddings *emb);

/**
 * # Safety
 * `emb` is null or a handle not yet freed.
 */
void sd_embeddings_free(struct SdEmbeddings *emb);

/**
 * Overclusters to `k` groups and reassigns them to `c` concepts. Rows are
 * labeled in key order. A `spectral_sigma` of 0 selects the default.
 *
 * # Safety
 * `emb` is a live handle; `out` is writable.
 */
enum SdStatus sd_ocra(const struct SdEmbeddings *emb,
                      size_t k,
                      size_t c,
                      double spectral_sigma,
                      uint64_t seed,
                      struct SdClustering **out);

/**
 * Number of labeled rows; 0 for null.
 *
 * # Safety
 * `res` is null or a live handle.
 */
size_t sd_clustering_len(const struct SdClustering *res);

/**
 * Copies concept labels, one per row, into `out`.
 *
 * # Safety
 * `res` is a live handle; `out` has room for `len` values.
 */
enum SdStatus sd_clustering_concepts(const struct SdClustering *res, uint32_t *out, size_t len);

/**
 * Copies overcluster labels, one per row, into `out`.
 *
 * # Safety
 * `res` is a live handle; `out` has room for `len` values.
 */
enum SdStatus sd_clustering_overclusters(const struct SdClustering *res, uint32_t *out, size_t len);

/**
 * # Safety
 * `res` is null or a handle not yet freed.
 */
void sd_clustering_free(struct SdClustering *res);

/**
 * Loads a trained refiner.
 *
 * # Safety
 * `path` is a NUL-terminated string; `out` is writable.
 */
enum SdStatus sd_refiner_load(const char *path, struct SdRefiner **out);

/**
 * Concept count; 0 for null.
 *
 * # Safety
 * `model` is null or a live handle.
 */
size_t sd_refiner_concepts(const struct SdRefiner *model);

/**
 * Predicts one concept label per pixel of an interleaved RGB image.
 *
 * # Safety
 * `model` is a live handle, `rgb` holds `height * width * 3` bytes,
 * `labels_out` has room for `height * width` values.
 */
enum SdStatus sd_refiner_predict(const struct SdRefiner *model,
                                 const uint8_t *rgb,
                                 size_t height,
                                 size_t width,
                                 uint32_t *labels_out);

/**
 * # Safety
 * `model` is null or a handle not yet freed.
 */
void sd_refiner_free(struct SdRefiner *model);

/**
 * Scores `pixels` predicted labels in `0..groups` against ground truth in
 * `0..classes`; ground-truth pixels equal to 65535 are ignored.
 *
 * # Safety
 * `pred` and `gt` hold `pixels` values; `out` is writable.
 */
enum SdStatus sd_evaluate(const uint32_t *pred,
                          const uint32_t *gt,
                          size_t pixels,
                          size_t groups,
                          size_t classes,
                          enum SdMatching matching,
                          struct SdMetrics *out);

/**
 * Opens a working directory. `config_path` may be null for defaults or the
 * directory's saved configuration.
 *
 * # Safety
 * `workdir` is a NUL-terminated string, `config_path` is null or one,
 * `out` is writable.
 */
enum SdStatus sd_run_open(const char *workdir, const char *config_path, struct SdRun **out);

/**
 * Opens a working directory with the default configuration overridden by
 * `count` key/value pairs, for callers without a config file.
 *
 * # Safety
 * `workdir` is a NUL-terminated string; `keys` and `values` hold `count`
 * NUL-terminated strings; `out` is writable.
 */
enum SdStatus sd_run_open_with(const char *workdir,
                               const char *const *keys,
                               const char *const *values,
                               size_t count,
                               struct SdRun **out);

/**
 * Runs every stage on the images of `manifest`. With a ground-truth
 * manifest, writes refined and unrefined scores under majority matching
 * to `refined_out` and `unrefined_out`, which may then not be null.
 *
 * # Safety
 * `run` is a live handle; `manifest` is a NUL-terminated string;
 * `gt_manifest` is null or one; the outputs are null or writable.
 */
enum SdStatus sd_run_pipeline(const struct SdRun *run,
                              const char *manifest,
                              const char *gt_manifest,
                              struct SdMetrics *refined_out,
                              struct SdMetrics *unrefined_out);

/**
 * # Safety
 * `run` is null or a handle not yet freed.
 */
void sd_run_free(struct SdRun *run);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SEGDISCOVER_H */
