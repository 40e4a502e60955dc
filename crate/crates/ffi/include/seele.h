#ifndef SEELE_H
#define SEELE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define SEELE_ENGINE_REFERENCE 0

#define SEELE_ENGINE_CONTRIBUTION_AWARE 1

typedef enum SeeleStatus {
  SEELE_STATUS_OK = 0,
  SEELE_STATUS_INVALID_ARGUMENT = 1,
  SEELE_STATUS_IO = 2,
  SEELE_STATUS_SCHEMA = 3,
  SEELE_STATUS_DATA = 4,
  SEELE_STATUS_CORRUPTION = 5,
  SEELE_STATUS_CONTRACT = 6,
  SEELE_STATUS_PANIC = 7,
  SEELE_STATUS_NULL_POINTER = 8,
  SEELE_STATUS_BUFFER_TOO_SMALL = 9,
} SeeleStatus;

/**
 * An opened clustered scene directory; chunks load lazily.
 */
typedef struct SeeleClustered SeeleClustered;

/**
 * Streaming renderer over a clustered scene, with its own loader thread.
 */
typedef struct SeeleResidency SeeleResidency;

/**
 * A loaded PLY scene.
 */
typedef struct SeeleScene SeeleScene;

typedef struct SeeleCamera {
  double position[3];
  /**
   * Unit quaternion (w, x, y, z) rotating camera axes into the world; the
   * camera looks down its +z axis with +y pointing down the image.
   */
  double orientation_wxyz[4];
  double fov_x;
  double fov_y;
  uint32_t width;
  uint32_t height;
} SeeleCamera;

typedef struct SeeleRenderOptions {
  /**
   * `SEELE_ENGINE_REFERENCE` or `SEELE_ENGINE_CONTRIBUTION_AWARE`.
   */
  uint32_t engine;
  /**
   * Pixel group width for the contribution-aware engine: 1, 2 or 4.
   */
  uint32_t group_w;
  double background[3];
} SeeleRenderOptions;

typedef struct SeeleFrameStats {
  uint64_t gaussians_in;
  uint64_t culled;
  uint64_t degenerate;
  uint64_t tile_pairs;
  uint64_t pixel_alpha_evals;
  uint64_t pixel_blends;
  uint64_t alpha_eval_steps;
  uint64_t blend_steps;
  uint64_t leader_eval_steps;
  uint64_t warp_steps;
  uint64_t resident_bytes;
  uint64_t stalls;
  uint64_t prefetch_hits;
} SeeleFrameStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length including the NUL, or
 * 0 when there is no message. `buf` may be null to query the length.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t seele_last_error_message(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *seele_version(void);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be valid for a write.
 */
enum SeeleStatus seele_scene_load_ply(const char *path, struct SeeleScene **out);

/**
 * # Safety
 * `scene` must be null or a handle from [`seele_scene_load_ply`] not yet freed.
 */
void seele_scene_free(struct SeeleScene *scene);

/**
 * Number of gaussians, 0 for a null handle.
 *
 * # Safety
 * `scene` must be null or a live handle.
 */
size_t seele_scene_len(const struct SeeleScene *scene);

/**
 * Renders one frame of a flat scene. `options` may be null for defaults;
 * `out_stats` may be null.
 *
 * # Safety
 * Handles and pointers must be valid; `out_rgb` must hold `out_len` floats.
 */
enum SeeleStatus seele_render(const struct SeeleScene *scene,
                              const struct SeeleCamera *camera,
                              const struct SeeleRenderOptions *options,
                              float *out_rgb,
                              size_t out_len,
                              struct SeeleFrameStats *out_stats);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be valid for a write.
 */
enum SeeleStatus seele_clustered_open(const char *path, struct SeeleClustered **out);

/**
 * # Safety
 * `scene` must be null or a live handle. Residency handles created from it
 * keep their own reference and stay valid.
 */
void seele_clustered_free(struct SeeleClustered *scene);

/**
 * # Safety
 * `scene` must be null or a live handle.
 */
size_t seele_clustered_num_clusters(const struct SeeleClustered *scene);

/**
 * Creates a streaming renderer keeping the nearest cluster and `m`
 * neighbors resident. `prefetch` = 0 disables the background loader.
 *
 * # Safety
 * `scene` must be a live handle; `out` must be valid for a write.
 */
enum SeeleStatus seele_residency_new(const struct SeeleClustered *scene,
                                     size_t m,
                                     uint8_t prefetch,
                                     struct SeeleResidency **out);

/**
 * Renders the next frame of a trajectory.
 *
 * # Safety
 * As [`seele_render`]; `residency` must not be used from two threads at once.
 */
enum SeeleStatus seele_residency_render_frame(struct SeeleResidency *residency,
                                              const struct SeeleCamera *camera,
                                              const struct SeeleRenderOptions *options,
                                              float *out_rgb,
                                              size_t out_len,
                                              struct SeeleFrameStats *out_stats);

/**
 * Peak committed bytes so far, 0 for a null handle.
 *
 * # Safety
 * `residency` must be null or a live handle.
 */
uint64_t seele_residency_peak_bytes(const struct SeeleResidency *residency);

/**
 * # Safety
 * `residency` must be null or a live handle. Joins the loader thread.
 */
void seele_residency_free(struct SeeleResidency *residency);

/**
 * PSNR in dB between two RGB float buffers of `len` values each; writes
 * `INFINITY` for identical buffers.
 *
 * # Safety
 * `a` and `b` must hold `len` floats; `out` must be valid for a write.
 */
enum SeeleStatus seele_psnr(const float *a, const float *b, size_t len, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SEELE_H */
