#ifndef PROJQA_H
#define PROJQA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ProjqaPreset {
  PROJQA_PRESET_TINY = 0,
  PROJQA_PRESET_BASE = 1,
} ProjqaPreset;

// Result code of every fallible call.
typedef enum ProjqaStatus {
  PROJQA_STATUS_OK = 0,
  PROJQA_STATUS_INVALID_ARGUMENT = 1,
  PROJQA_STATUS_IO = 2,
  PROJQA_STATUS_PARSE = 3,
  PROJQA_STATUS_UNSUPPORTED = 4,
  PROJQA_STATUS_INVALID_MODEL = 5,
  PROJQA_STATUS_EMPTY_PROJECTION = 6,
  PROJQA_STATUS_DIMENSION_MISMATCH = 7,
  PROJQA_STATUS_NON_FINITE = 8,
  PROJQA_STATUS_CONSTANT_INPUT = 9,
  PROJQA_STATUS_BACKEND = 10,
  PROJQA_STATUS_WEIGHTS_NOT_FOUND = 11,
  PROJQA_STATUS_BUFFER_TOO_SMALL = 12,
  PROJQA_STATUS_PANIC = 13,
  PROJQA_STATUS_INTERNAL = 14,
} ProjqaStatus;

// Opaque regression-head weights.
typedef struct ProjqaHead ProjqaHead;

// Opaque loaded model (point cloud or textured mesh).
typedef struct ProjqaModel ProjqaModel;

// Pipeline settings. Obtain defaults from [`projqa_config_preset`].
typedef struct ProjqaConfig {
  uint32_t n_projections;
  uint32_t grid_rows;
  uint32_t grid_cols;
  uint32_t grid_patch;
  uint32_t viewport;
  uint32_t splat_radius;
  double padding;
  uint64_t seed;
} ProjqaConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer stays
// valid until the next projqa call on the same thread.
const char *projqa_last_error(void);

// Library version as a static NUL-terminated string.
const char *projqa_version(void);

struct ProjqaConfig projqa_config_preset(enum ProjqaPreset preset);

// Loads a `.ply` point cloud or `.obj` textured mesh.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum ProjqaStatus projqa_model_load(const char *path, struct ProjqaModel **out);

// Builds a point cloud from `n` xyz triples and `n` rgb triples in [0, 1].
//
// # Safety
// `xyz` and `rgb` must each point to `3 * n` floats; `out` must be valid.
enum ProjqaStatus projqa_model_from_points(const float *xyz,
                                           const float *rgb,
                                           size_t n,
                                           struct ProjqaModel **out);

// Number of points (clouds) or faces (meshes); 0 for null.
//
// # Safety
// `model` must be null or a live handle.
size_t projqa_model_size(const struct ProjqaModel *model);

// # Safety
// `model` must be null or a handle not yet freed.
void projqa_model_free(struct ProjqaModel *model);

// Loads head weights JSON.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum ProjqaStatus projqa_head_load(const char *path, struct ProjqaHead **out);

// # Safety
// `head` must be null or a handle not yet freed.
void projqa_head_free(struct ProjqaHead *head);

// Scores a model. Per-projection scores go to `scores` (room for
// `capacity` values, may be null when `capacity` is 0); their count goes to
// `written` and the mean to `aggregate`. Fails with `BufferTooSmall`, with
// `written` set to the required count, if `capacity` is short.
//
// # Safety
// Handles must be live; `config`, `written` and `aggregate` valid pointers;
// `scores` must have room for `capacity` doubles.
enum ProjqaStatus projqa_score(const struct ProjqaModel *model,
                               const struct ProjqaHead *head,
                               const struct ProjqaConfig *config,
                               double *scores,
                               size_t capacity,
                               size_t *written,
                               double *aggregate);

// Spearman rank correlation of two length-`n` vectors.
//
// # Safety
// `a` and `b` must point to `n` doubles; `out` must be valid.
enum ProjqaStatus projqa_srcc(const double *a, const double *b, size_t n, double *out);

// Kendall tau-b of two length-`n` vectors.
//
// # Safety
// As for [`projqa_srcc`].
enum ProjqaStatus projqa_krcc(const double *a, const double *b, size_t n, double *out);

// Pearson correlation of two length-`n` vectors.
//
// # Safety
// As for [`projqa_srcc`].
enum ProjqaStatus projqa_plcc(const double *a, const double *b, size_t n, double *out);

// Root mean squared difference of two length-`n` vectors.
//
// # Safety
// As for [`projqa_srcc`].
enum ProjqaStatus projqa_rmse(const double *a, const double *b, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PROJQA_H */
