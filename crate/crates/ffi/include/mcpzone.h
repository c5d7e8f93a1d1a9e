#ifndef MCPZONE_H
#define MCPZONE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum McpStatus {
  MCP_STATUS_OK = 0,
  MCP_STATUS_NULL_POINTER = 1,
  MCP_STATUS_INVALID_ARGUMENT = 2,
  MCP_STATUS_IO = 3,
  MCP_STATUS_PARSE = 4,
  MCP_STATUS_VALIDATION = 5,
  MCP_STATUS_BUFFER_TOO_SMALL = 6,
  MCP_STATUS_INTERNAL = 7,
} McpStatus;

/**
 * Coordinate system of the input layers.
 */
typedef enum McpCrs {
  /**
   * Format default: GeoJSON is WGS84, CSV is planar.
   */
  MCP_CRS_AUTO = 0,
  MCP_CRS_PLANAR = 1,
  MCP_CRS_WGS84 = 2,
} McpCrs;

typedef struct McpKdTree McpKdTree;

typedef struct McpZoneSet McpZoneSet;

typedef struct McpPoint {
  double x;
  double y;
} McpPoint;

typedef struct McpNeighbor {
  size_t index;
  double distance;
} McpNeighbor;

/**
 * Pipeline knobs. Fill with [`mcp_pipeline_params_default`] first.
 */
typedef struct McpPipelineParams {
  size_t k;
  double d_max;
  double radius;
  double min_extent;
  size_t min_poles;
  enum McpCrs crs;
  /**
   * Worker threads; 0 uses the global pool.
   */
  size_t threads;
} McpPipelineParams;

/**
 * Summary of one zone. Coordinates are in the source frame.
 */
typedef struct McpZoneInfo {
  double extent_m;
  size_t pole_count;
  size_t circuit_count;
  double centroid_x;
  double centroid_y;
} McpZoneInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf`.
 * Returns the message length in bytes without the NUL, or 0 if there is
 * none. The message is truncated when `cap` is too small.
 *
 * # Safety
 * `buf` must be null or point to `cap` writable bytes.
 */
size_t mcp_last_error_message(char *buf, size_t cap);

/**
 * Library version as a static NUL-terminated string.
 */
const char *mcp_version(void);

/**
 * Builds a KD-tree over `len` points.
 *
 * # Safety
 * `points` must point to `len` readable points and `out` must be writable.
 */
enum McpStatus mcp_kdtree_new(const struct McpPoint *points, size_t len, struct McpKdTree **out);

/**
 * # Safety
 * `tree` must come from [`mcp_kdtree_new`] and not be used afterwards.
 */
void mcp_kdtree_free(struct McpKdTree *tree);

/**
 * # Safety
 * `tree` must be null or a live handle.
 */
size_t mcp_kdtree_len(const struct McpKdTree *tree);

/**
 * Up to `k` nearest points within `max_dist` (use `INFINITY` for no
 * limit), nearest first.
 *
 * # Safety
 * `tree` must be a live handle, `out` must hold `cap` neighbors and
 * `out_len` must be writable.
 */
enum McpStatus mcp_kdtree_knn(const struct McpKdTree *tree,
                              struct McpPoint query,
                              size_t k,
                              double max_dist,
                              struct McpNeighbor *out,
                              size_t cap,
                              size_t *out_len);

/**
 * All points within distance `r`, boundary included. If `cap` is too
 * small the call fails with `BUFFER_TOO_SMALL` and `out_len` holds the
 * required count, so a second call can size the buffer exactly.
 *
 * # Safety
 * As for [`mcp_kdtree_knn`].
 */
enum McpStatus mcp_kdtree_radius(const struct McpKdTree *tree,
                                 struct McpPoint query,
                                 double r,
                                 struct McpNeighbor *out,
                                 size_t cap,
                                 size_t *out_len);

/**
 * # Safety
 * `out` must be writable.
 */
enum McpStatus mcp_pipeline_params_default(struct McpPipelineParams *out);

/**
 * Runs association, detection and clustering on a pole and a wire file
 * (CSV or GeoJSON). `params` may be null for defaults.
 *
 * # Safety
 * The paths must be NUL-terminated strings, `params` null or readable,
 * and `out` writable.
 */
enum McpStatus mcp_zones_compute(const char *poles_path,
                                 const char *wires_path,
                                 const struct McpPipelineParams *params,
                                 struct McpZoneSet **out);

/**
 * # Safety
 * `set` must come from [`mcp_zones_compute`] and not be used afterwards.
 */
void mcp_zones_free(struct McpZoneSet *set);

/**
 * # Safety
 * `set` must be null or a live handle.
 */
size_t mcp_zones_len(const struct McpZoneSet *set);

/**
 * # Safety
 * `set` must be a live handle and `out` writable.
 */
enum McpStatus mcp_zones_get(const struct McpZoneSet *set, size_t index, struct McpZoneInfo *out);

/**
 * Copies the zone id into `buf` (NUL-terminated).
 *
 * # Safety
 * `set` must be a live handle, `buf` must hold `cap` bytes and `out_len`
 * must be null or writable.
 */
enum McpStatus mcp_zones_id(const struct McpZoneSet *set,
                            size_t index,
                            char *buf,
                            size_t cap,
                            size_t *out_len);

/**
 * Writes zones.geojson, zones.csv and histogram.csv into `dir`,
 * creating it if needed.
 *
 * # Safety
 * `set` must be a live handle and `dir` a NUL-terminated string.
 */
enum McpStatus mcp_zones_write(const struct McpZoneSet *set, const char *dir);

/**
 * Weighted score in `[0, 100]` of six factor values in `[0, 1]`.
 * `weights` may be null for the default weights; otherwise its six
 * entries must be non-negative and sum to 100.
 *
 * # Safety
 * `factors` must point to 6 doubles, `weights` to 6 doubles or null, and
 * `out` must be writable.
 */
enum McpStatus mcp_score_zone(const double *factors, const double *weights, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MCPZONE_H */
