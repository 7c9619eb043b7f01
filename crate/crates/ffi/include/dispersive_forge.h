#ifndef DISPERSIVE_FORGE_H
#define DISPERSIVE_FORGE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DfStatus {
  DF_STATUS_OK = 0,
  DF_STATUS_NULL_POINTER = 1,
  DF_STATUS_INVALID_ARGUMENT = 2,
  DF_STATUS_EVALUATION = 3,
  DF_STATUS_DEGENERATE = 4,
  DF_STATUS_UNKNOWN_PRESET = 5,
  DF_STATUS_CONFIG = 6,
  DF_STATUS_HARNESS = 7,
  DF_STATUS_PANIC = 8,
} DfStatus;

typedef enum DfTermination {
  DF_TERMINATION_REACHED_T_END = 0,
  DF_TERMINATION_BLOWUP_DETECTED = 1,
  DF_TERMINATION_DISPERSION_DEGENERATE = 2,
  DF_TERMINATION_STEP_UNDERFLOW = 3,
} DfTermination;

// Periodic grid of `N` points on `[0, L)`.
typedef struct DfGrid DfGrid;

// A right-hand side `f(z3, z2, z1, z0, x, t)` with its partials.
typedef struct DfSpec DfSpec;

// Grid values of a real field at one time.
typedef struct DfState DfState;

// Snapshots and bookkeeping of one integration.
typedef struct DfTrajectory DfTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the last error message (NUL-terminated, truncated to `cap`) into
// `buf` and returns the full message length in bytes, excluding the NUL.
//
// # Safety
// `buf` must be null or valid for `cap` bytes.
size_t df_last_error_message(char *buf, size_t cap);

// `ε = δ⁵`.
double df_coupled_epsilon(double delta);

// # Safety
// `out` must be valid for one pointer write.
enum DfStatus df_grid_new(double length, size_t n, struct DfGrid **out);

// # Safety
// `grid` must be null or a pointer from [`df_grid_new`] not yet freed.
void df_grid_free(struct DfGrid *grid);

// Number of points, or 0 for a null grid.
//
// # Safety
// `grid` must be null or a live grid.
size_t df_grid_len(const struct DfGrid *grid);

// # Safety
// `values` must be valid for `len` reads; `grid` live; `out` writable.
enum DfStatus df_state_from_values(const struct DfGrid *grid,
                                   const double *values,
                                   size_t len,
                                   double time,
                                   struct DfState **out);

// Samples the default initial profile of a named preset.
//
// # Safety
// `name` must be a NUL-terminated string; `grid` live; `out` writable.
enum DfStatus df_state_preset_data(const char *name,
                                   const struct DfGrid *grid,
                                   struct DfState **out);

// # Safety
// `state` must be null or a live state.
void df_state_free(struct DfState *state);

// # Safety
// `state` must be null or a live state.
size_t df_state_len(const struct DfState *state);

// # Safety
// `state` must be null or a live state.
double df_state_time(const struct DfState *state);

// Copies the grid values into `out`, which must hold exactly
// [`df_state_len`] entries.
//
// # Safety
// `out` must be valid for `len` writes.
enum DfStatus df_state_values(const struct DfState *state, double *out, size_t len);

// # Safety
// `state` live; `out` writable.
enum DfStatus df_state_sobolev_norm(const struct DfState *state, double s, double *out);

// # Safety
// `state` live; `out` writable.
enum DfStatus df_mollify(const struct DfState *state, double delta, struct DfState **out);

// # Safety
// `name` NUL-terminated; `out` writable.
enum DfStatus df_spec_preset(const char *name, struct DfSpec **out);

// Builds a right-hand side from an expression in `z3 z2 z1 z0 x t`, with
// symbolic partials through `max_order`.
//
// # Safety
// `name` and `expr` NUL-terminated; `out` writable.
enum DfStatus df_spec_from_expr(const char *name,
                                const char *expr,
                                size_t max_order,
                                struct DfSpec **out);

// # Safety
// `spec` must be null or a live spec.
void df_spec_free(struct DfSpec *spec);

// # Safety
// `spec`, `state` live; `out` writable.
enum DfStatus df_evaluate_rhs(const struct DfSpec *spec,
                              const struct DfState *state,
                              struct DfState **out);

// `max 1/|f_z3|`, `+∞` when the dispersion degenerates.
//
// # Safety
// `spec`, `state` live; `out` writable.
enum DfStatus df_dispersion_lambda(const struct DfSpec *spec,
                                   const struct DfState *state,
                                   double *out);

// Relative mismatch of the order-`n` coefficient identity.
//
// # Safety
// `spec`, `state` live; `out` writable.
enum DfStatus df_reconstruction_error(const struct DfSpec *spec,
                                      const struct DfState *state,
                                      size_t n,
                                      double *out);

// Integrates `u_t = f − ε∂x⁴u` to `t_end` with snapshots every `dt_out`.
// A blow-up or degenerate stop is not an error; inspect
// [`df_trajectory_termination`].
//
// # Safety
// `spec`, `state` live; `out` writable.
enum DfStatus df_integrate(const struct DfSpec *spec,
                           const struct DfState *state,
                           double epsilon,
                           double t_end,
                           double dt_out,
                           double rtol,
                           struct DfTrajectory **out);

// # Safety
// `traj` must be null or a live trajectory.
void df_trajectory_free(struct DfTrajectory *traj);

// Number of stored snapshots, including the initial one.
//
// # Safety
// `traj` must be null or live.
size_t df_trajectory_len(const struct DfTrajectory *traj);

// # Safety
// `traj` must be null or live.
double df_trajectory_final_time(const struct DfTrajectory *traj);

// # Safety
// `traj` live; `out` writable.
enum DfStatus df_trajectory_termination(const struct DfTrajectory *traj, enum DfTermination *out);

// Copies snapshot `index` into a new state.
//
// # Safety
// `traj` live; `out` writable.
enum DfStatus df_trajectory_snapshot(const struct DfTrajectory *traj,
                                     size_t index,
                                     struct DfState **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DISPERSIVE_FORGE_H */
