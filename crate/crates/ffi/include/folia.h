#ifndef FOLIA_H
#define FOLIA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum FoliaStatus {
  FOLIA_STATUS_OK = 0,
  FOLIA_STATUS_NULL_POINTER = 1,
  FOLIA_STATUS_INVALID_ARGUMENT = 2,
  FOLIA_STATUS_BUFFER_SIZE = 3,
  FOLIA_STATUS_UNKNOWN_MODEL = 4,
  FOLIA_STATUS_UNKNOWN_TARGET = 5,
  FOLIA_STATUS_INVALID_MODEL = 6,
  FOLIA_STATUS_CHART_DOMAIN = 7,
  FOLIA_STATUS_NON_CONVERGENCE = 8,
  FOLIA_STATUS_FLOW_ABORTED = 9,
  FOLIA_STATUS_INTERNAL = 10,
} FoliaStatus;

// Which functional a variation refers to.
typedef enum FoliaFunctional {
  FOLIA_FUNCTIONAL_ENERGY = 0,
  FOLIA_FUNCTIONAL_BIENERGY = 1,
} FoliaFunctional;

// Which gradient flow to run.
typedef enum FoliaFlow {
  FOLIA_FLOW_HARMONIC = 0,
  FOLIA_FLOW_BIENERGY = 1,
} FoliaFlow;

// Map sampled on a model's grid.
typedef struct FoliaMap FoliaMap;

// Discretized source foliation.
typedef struct FoliaModel FoliaModel;

// Target surface chart.
typedef struct FoliaTarget FoliaTarget;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the
// next call into the library on the same thread.
const char *folia_last_error(void);

// Library version as a static NUL-terminated string.
const char *folia_version(void);

// Build a catalog model. `order` is the stencil accuracy (2, 4 or 6), or 0
// for the default.
//
// # Safety
// `name` must be a NUL-terminated string and `out` a valid pointer.
enum FoliaStatus folia_model_new(const char *name,
                                 double epsilon,
                                 size_t codim,
                                 size_t resolution,
                                 uint32_t order,
                                 struct FoliaModel **out);

// # Safety
// `model` must come from [`folia_model_new`] and not be used afterwards.
void folia_model_free(struct FoliaModel *model);

// Number of grid nodes, or 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
size_t folia_model_node_count(const struct FoliaModel *model);

// Codimension `q`, or 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
size_t folia_model_codim(const struct FoliaModel *model);

// Build a catalog target. A NaN `curvature` selects the catalog default.
//
// # Safety
// `name` must be a NUL-terminated string and `out` a valid pointer.
enum FoliaStatus folia_target_new(const char *name, double curvature, struct FoliaTarget **out);

// # Safety
// `target` must come from [`folia_target_new`] and not be used afterwards.
void folia_target_free(struct FoliaTarget *target);

// Identity map of the grid into the flat torus.
//
// # Safety
// Handles must be live; `out` must be valid.
enum FoliaStatus folia_map_identity(const struct FoliaModel *model,
                                    const struct FoliaTarget *target,
                                    struct FoliaMap **out);

// `u = A x + b` with `A` row-major, `2 q` integer entries.
//
// # Safety
// Handles must be live; `matrix` must hold `len` values; `out` must be valid.
enum FoliaStatus folia_map_linear(const struct FoliaModel *model,
                                  const struct FoliaTarget *target,
                                  const int64_t *matrix,
                                  size_t len,
                                  double b0,
                                  double b1,
                                  struct FoliaMap **out);

// Map from node values (`2` per node, node-major) and the lift winding
// (`2 q` entries, zeros for non-periodic targets).
//
// # Safety
// Handles must be live; arrays must hold the stated lengths; `out` must be valid.
enum FoliaStatus folia_map_from_values(const struct FoliaModel *model,
                                       const struct FoliaTarget *target,
                                       const double *values,
                                       size_t len,
                                       const int64_t *winding,
                                       size_t winding_len,
                                       struct FoliaMap **out);

// # Safety
// `map` must come from a `folia_map_*` constructor and not be used afterwards.
void folia_map_free(struct FoliaMap *map);

// Length of the value array of a map (`2` per node), or 0 for null.
//
// # Safety
// `map` must be null or a live handle.
size_t folia_map_len(const struct FoliaMap *map);

// Copy the node values of a map into `out`.
//
// # Safety
// `map` must be live and `out` must hold `len` doubles.
enum FoliaStatus folia_map_values(const struct FoliaMap *map, double *out, size_t len);

// Transversal energy.
//
// # Safety
// Handles must be live; `out` must be valid.
enum FoliaStatus folia_energy(const struct FoliaModel *model,
                              const struct FoliaMap *map,
                              double *out);

// Transversal bi-energy.
//
// # Safety
// Handles must be live; `out` must be valid.
enum FoliaStatus folia_bienergy(const struct FoliaModel *model,
                                const struct FoliaMap *map,
                                double *out);

// Tension field, `2` values per node.
//
// # Safety
// Handles must be live; `out` must hold `len` doubles.
enum FoliaStatus folia_tension(const struct FoliaModel *model,
                               const struct FoliaMap *map,
                               double *out,
                               size_t len);

// Bi-tension field, `2` values per node.
//
// # Safety
// Handles must be live; `out` must hold `len` doubles.
enum FoliaStatus folia_bitension(const struct FoliaModel *model,
                                 const struct FoliaMap *map,
                                 double *out,
                                 size_t len);

// Max-norm residual of the stress-energy conservation law.
//
// # Safety
// Handles must be live; `out` must be valid.
enum FoliaStatus folia_conservation_residual(const struct FoliaModel *model,
                                             const struct FoliaMap *map,
                                             double *out);

// First variation along `v` (`2` values per node): Richardson-extrapolated
// finite difference and the closed formula.
//
// # Safety
// Handles must be live; `v` must hold `len` doubles; outputs must be valid.
enum FoliaStatus folia_first_variation(const struct FoliaModel *model,
                                       const struct FoliaMap *map,
                                       enum FoliaFunctional functional,
                                       const double *v,
                                       size_t len,
                                       double *fd,
                                       double *formula);

// The `k` lowest eigenvalues of the Jacobi operator, ascending. Uses the
// iterative solver when `iterative` is non-zero.
//
// # Safety
// Handles must be live; `out` must hold `k` doubles.
enum FoliaStatus folia_lowest_eigenvalues(const struct FoliaModel *model,
                                          const struct FoliaMap *map,
                                          size_t k,
                                          int32_t iterative,
                                          double *out);

// Run a gradient flow with default step size. Writes the final map to
// `out` and the number of steps taken to `steps`; `converged` is set to 1
// when the max-norm tension dropped below `stop_tol`.
//
// # Safety
// Handles must be live; outputs must be valid.
enum FoliaStatus folia_flow(const struct FoliaModel *model,
                            const struct FoliaMap *map,
                            enum FoliaFlow kind,
                            size_t max_steps,
                            double stop_tol,
                            struct FoliaMap **out,
                            size_t *steps,
                            int32_t *converged);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FOLIA_H */
