#ifndef FROSTMAN_H
#define FROSTMAN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every call.
typedef enum FmStatus {
  FM_STATUS_OK = 0,
  // A required pointer was null.
  FM_STATUS_NULL_POINTER = 1,
  // Malformed input: bad spec, bad points, bad file, out-of-range argument.
  FM_STATUS_INVALID_ARGUMENT = 2,
  // Parameters that the tree cannot support, such as a scale finer than
  // its depth or `s > t`.
  FM_STATUS_INFEASIBLE = 3,
  // A count does not fit in 64 bits.
  FM_STATUS_OVERFLOW = 4,
  // A bug: the library panicked or hit an internal inconsistency.
  FM_STATUS_INTERNAL = 5,
} FmStatus;

// Normalized cascade measure with its equality cover.
typedef struct FmMeasure FmMeasure;

// Occupancy tree of a set, realized to a fixed depth.
typedef struct FmTree FmTree;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread; empty if none. The
// pointer stays valid until the next failing call on the same thread.
const char *fm_last_error(void);

// Realizes a set spec (TOML text) to depth `max_level`.
//
// # Safety
// `spec_toml` must be a NUL-terminated string; `out` must be writable.
enum FmStatus fm_tree_from_spec(const char *spec_toml, uint32_t max_level, struct FmTree **out);

// Builds the tree of cubes containing `count` points of dimension `dim`,
// stored row-major in `coords` with coordinates in `[0,1)`.
//
// # Safety
// `coords` must point to `count * dim` doubles; `out` must be writable.
enum FmStatus fm_tree_from_points(const double *coords,
                                  size_t count,
                                  size_t dim,
                                  uint32_t max_level,
                                  struct FmTree **out);

// Reads a tree file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum FmStatus fm_tree_load(const char *path, struct FmTree **out);

// Writes a tree file.
//
// # Safety
// `tree` must be a live handle; `path` a NUL-terminated string.
enum FmStatus fm_tree_save(const struct FmTree *tree, const char *path);

// # Safety
// `tree` must be null or a handle not yet freed.
void fm_tree_free(struct FmTree *tree);

// Ambient dimension and depth of a tree.
//
// # Safety
// `tree` must be a live handle; out pointers must be writable.
enum FmStatus fm_tree_shape(const struct FmTree *tree, size_t *dim, uint32_t *max_level);

// Number of occupied cubes at `level`.
//
// # Safety
// `tree` must be a live handle; `out` must be writable.
enum FmStatus fm_tree_occupied_count(const struct FmTree *tree, uint32_t level, uint64_t *out);

// Dyadic dimension: minimum of `log2 N_n` over `burn_in..max_level`.
//
// # Safety
// `tree` must be a live handle; `out` must be writable.
enum FmStatus fm_dyadic_dimension(const struct FmTree *tree, uint32_t burn_in, double *out);

// Box-counting slope over levels `lo..=hi`, with its RMS residual.
//
// # Safety
// `tree` must be a live handle; out pointers must be writable.
enum FmStatus fm_box_dimension(const struct FmTree *tree,
                               uint32_t lo,
                               uint32_t hi,
                               double *slope,
                               double *residual);

// Lower dimension over the default level window starting at `burn_in`.
//
// # Safety
// `tree` must be a live handle; `out` must be writable.
enum FmStatus fm_lower_dimension(const struct FmTree *tree, uint32_t burn_in, double *out);

// Intermediate dimension estimate at scale `delta` for `theta`.
//
// # Safety
// `tree` must be a live handle; `out` must be writable.
enum FmStatus fm_intermediate_dimension(const struct FmTree *tree,
                                        double theta,
                                        double delta,
                                        double *out);

// Constructs the normalized `(delta, s, t)` cascade measure on `tree`. The
// measure keeps its own reference to the tree, which may be freed first.
//
// # Safety
// `tree` must be a live handle; `out` must be writable.
enum FmStatus fm_construct(const struct FmTree *tree,
                           double theta,
                           double delta,
                           double s,
                           double t,
                           struct FmMeasure **out);

// # Safety
// `measure` must be null or a handle not yet freed.
void fm_measure_free(struct FmMeasure *measure);

// Unnormalized total mass `T`, the fine level `m`, the top level `L`, and
// the number of equality-cover cubes.
//
// # Safety
// `measure` must be a live handle; out pointers must be writable.
enum FmStatus fm_measure_summary(const struct FmMeasure *measure,
                                 double *total,
                                 uint32_t *m,
                                 uint32_t *top,
                                 uint64_t *cover_size);

// Normalized mass of the cube at `level` with per-axis indices `index`
// (`dim` entries).
//
// # Safety
// `measure` must be a live handle; `index` must point to `dim` integers;
// `out` must be writable.
enum FmStatus fm_measure_cube_mass(const struct FmMeasure *measure,
                                   uint32_t level,
                                   const uint64_t *index,
                                   size_t dim,
                                   double *out);

// Normalized mass of the ball of radius `r` around `x` (`dim` entries).
//
// # Safety
// `measure` must be a live handle; `x` must point to `dim` doubles; `out`
// must be writable.
enum FmStatus fm_measure_ball_mass(const struct FmMeasure *measure,
                                   const double *x,
                                   size_t dim,
                                   double r,
                                   double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FROSTMAN_H */
