#ifndef SPLICEDET_H
#define SPLICEDET_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SdStatus {
  SD_STATUS_OK = 0,
  SD_STATUS_NULL_ARGUMENT = 1,
  SD_STATUS_INVALID_ARGUMENT = 2,
  SD_STATUS_IO = 3,
  SD_STATUS_FORMAT = 4,
  SD_STATUS_CHECKPOINT = 5,
  SD_STATUS_MISSING_ASSET = 6,
  SD_STATUS_CONFIG = 7,
  SD_STATUS_NON_FINITE = 8,
  SD_STATUS_FAILED = 9,
  SD_STATUS_PANIC = 10,
} SdStatus;

/**
 * Ranked hypotheses from one detection.
 */
typedef struct SdDetection SdDetection;

/**
 * Model input features, row-major `frames × width`.
 */
typedef struct SdFeatures SdFeatures;

/**
 * Loaded detector.
 */
typedef struct SdModel SdModel;

typedef struct SdWindowScore {
  size_t matched;
  double jaccard;
  double recall;
} SdWindowScore;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread; empty if none.
 * The pointer is owned by the library.
 */
const char *sd_last_error(void);

/**
 * Loads an SFCK checkpoint.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum SdStatus sd_model_load(const char *path, struct SdModel **out);

/**
 * # Safety
 * `model` must come from `sd_model_load` and not be used afterwards.
 */
void sd_model_free(struct SdModel *model);

/**
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum SdStatus sd_model_parameter_count(const struct SdModel *model, size_t *out);

/**
 * Decodes up to `topn` ranked hypotheses for mono audio at `sample_rate`.
 *
 * # Safety
 * `samples` must hold `len` floats; `model` must be live; `out` writable.
 */
enum SdStatus sd_detect(const struct SdModel *model,
                        const float *samples,
                        size_t len,
                        uint32_t sample_rate,
                        size_t topn,
                        struct SdDetection **out);

/**
 * # Safety
 * `det` must be a live detection handle.
 */
size_t sd_detection_count(const struct SdDetection *det);

/**
 * Splice positions (seconds) of hypothesis `index`; zero length means no
 * splice. The array lives as long as `det`.
 *
 * # Safety
 * `det` must be live; output pointers must be writable.
 */
enum SdStatus sd_detection_positions(const struct SdDetection *det,
                                     size_t index,
                                     const double **positions,
                                     size_t *len);

/**
 * Length-normalized log-probability and truncation flag of hypothesis
 * `index`.
 *
 * # Safety
 * `det` must be live; output pointers must be writable.
 */
enum SdStatus sd_detection_score(const struct SdDetection *det,
                                 size_t index,
                                 double *score,
                                 bool *truncated);

/**
 * # Safety
 * `det` must come from `sd_detect` and not be used afterwards.
 */
void sd_detection_free(struct SdDetection *det);

/**
 * Computes the normalized feature matrix for mono audio.
 *
 * # Safety
 * `samples` must hold `len` floats; `out` must be writable.
 */
enum SdStatus sd_features(const float *samples,
                          size_t len,
                          uint32_t sample_rate,
                          struct SdFeatures **out);

/**
 * Shape and data of a feature matrix. `data` lives as long as `f`.
 *
 * # Safety
 * `f` must be live; output pointers must be writable.
 */
enum SdStatus sd_features_view(const struct SdFeatures *f,
                               size_t *frames,
                               size_t *width,
                               const float **data);

/**
 * # Safety
 * `f` must come from `sd_features` and not be used afterwards.
 */
void sd_features_free(struct SdFeatures *f);

/**
 * Windowed matching scores. Empty arrays stand for the no-splice symbol.
 *
 * # Safety
 * `truth` and `pred` must hold the given number of doubles; `out` writable.
 */
enum SdStatus sd_window_score(const double *truth,
                              size_t n_truth,
                              const double *pred,
                              size_t n_pred,
                              double w,
                              struct SdWindowScore *out);

/**
 * Generates `count` samples of a scenario (preset name or TOML path) from
 * a pool directory into `out_dir`. `written` receives the number of
 * records in the manifest.
 *
 * # Safety
 * String arguments must be NUL-terminated; `written` may be null.
 */
enum SdStatus sd_generate(const char *scenario,
                          const char *pool_dir,
                          const char *split,
                          size_t count,
                          uint64_t seed,
                          const char *out_dir,
                          size_t *written);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPLICEDET_H */
