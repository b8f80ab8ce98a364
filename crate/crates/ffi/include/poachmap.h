#ifndef POACHMAP_H
#define POACHMAP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes. `PM_STATUS_OK` is zero; the rest mirror the command-line exit
// codes where one applies.
typedef enum PmStatus {
  PM_STATUS_OK = 0,
  PM_STATUS_IO = 1,
  PM_STATUS_INVALID = 2,
  PM_STATUS_MODEL = 3,
  PM_STATUS_NULL_POINTER = 4,
  PM_STATUS_OUT_OF_RANGE = 5,
  PM_STATUS_BUFFER_TOO_SMALL = 6,
  PM_STATUS_PANIC = 7,
} PmStatus;

// Feature grid `V`, row-major, five features per cell.
typedef struct PmFeatureGrid PmFeatureGrid;

// Parsed land-cover raster.
typedef struct PmLandCover PmLandCover;

// Trained model with its scaler.
typedef struct PmModel PmModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null. The pointer
// stays valid until the next call on the same thread.
const char *pm_last_error(void);

// Library version as a static NUL-terminated string.
const char *pm_version(void);

// Parses an ESRI ASCII grid held in `text` using the WorldCover class map.
//
// # Safety
// `text` must be a NUL-terminated string and `out_grid` a writable pointer.
enum PmStatus pm_landcover_parse(const char *text, bool strict, struct PmLandCover **out_grid);

// # Safety
// `grid` must be a live handle; `rows` and `cols` writable.
enum PmStatus pm_landcover_dims(const struct PmLandCover *grid, uintptr_t *rows, uintptr_t *cols);

// Semantic class of a pixel: 0 built-up, 1 trees, 2 grass, 3 wetland,
// 4 other.
//
// # Safety
// `grid` must be a live handle and `class_out` writable.
enum PmStatus pm_landcover_class_at(const struct PmLandCover *grid,
                                    uintptr_t row,
                                    uintptr_t col,
                                    uint8_t *class_out);

// # Safety
// `grid` must come from [`pm_landcover_parse`] or be null.
void pm_landcover_free(struct PmLandCover *grid);

// Builds the feature grid for window size `g`.
//
// # Safety
// `grid` must be a live handle and `out_features` writable.
enum PmStatus pm_features_build(const struct PmLandCover *grid,
                                uintptr_t g,
                                struct PmFeatureGrid **out_features);

// # Safety
// `features` must be a live handle; `rows` and `cols` writable.
enum PmStatus pm_features_dims(const struct PmFeatureGrid *features,
                               uintptr_t *rows,
                               uintptr_t *cols);

// Copies `[a_h, a_t, a_g, d_f, d_w]` of cell `(i, j)` into `out5`.
//
// # Safety
// `features` must be a live handle and `out5` point to five doubles.
enum PmStatus pm_features_at(const struct PmFeatureGrid *features,
                             uintptr_t i,
                             uintptr_t j,
                             double *out5);

// # Safety
// `features` must come from [`pm_features_build`] or be null.
void pm_features_free(struct PmFeatureGrid *features);

// Exact Euclidean distance from each cell of a row-major `rows x cols`
// mask (nonzero = set) to the nearest set cell. With no set cell every
// output is the grid diagonal.
//
// # Safety
// `mask` and `out_distances` must each hold `rows * cols` elements.
enum PmStatus pm_distance_transform(const uint8_t *mask,
                                    uintptr_t rows,
                                    uintptr_t cols,
                                    double *out_distances);

// Parses a model file held in `text`.
//
// # Safety
// `text` must be a NUL-terminated string and `out_model` writable.
enum PmStatus pm_model_load(const char *text, struct PmModel **out_model);

// Predicts one raw (unscaled) feature row; the stored scaler is applied.
//
// # Safety
// `model` must be a live handle, `x5` point to five doubles and `y` be writable.
enum PmStatus pm_model_predict(const struct PmModel *model, const double *x5, double *y);

// # Safety
// `model` must come from [`pm_model_load`] or be null.
void pm_model_free(struct PmModel *model);

// Writes the clamped probability of every cell of `features`, row-major,
// into `out_values`. `capacity` is the buffer length in doubles.
//
// # Safety
// Both handles must be live and `out_values` hold `capacity` doubles.
enum PmStatus pm_heatmap_generate(const struct PmModel *model,
                                  const struct PmFeatureGrid *features,
                                  double *out_values,
                                  uintptr_t capacity);

// Coefficient of determination of `predictions` against `targets`.
//
// # Safety
// Both arrays must hold `n` doubles and `out_r2` be writable.
enum PmStatus pm_r2(const double *predictions, const double *targets, uintptr_t n, double *out_r2);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* POACHMAP_H */
