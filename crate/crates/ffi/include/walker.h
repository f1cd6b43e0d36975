#ifndef WALKER_H
#define WALKER_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum WalkerStatus {
  WALKER_STATUS_OK = 0,
  WALKER_STATUS_ERR_NULL = 1,
  WALKER_STATUS_ERR_INVALID = 2,
  WALKER_STATUS_ERR_RUNTIME = 3,
  WALKER_STATUS_ERR_IO = 4,
  WALKER_STATUS_ERR_PANIC = 5,
} WalkerStatus;

typedef enum WalkerModel {
  WALKER_MODEL_NON_LOCAL = 0,
  WALKER_MODEL_LOCAL = 1,
} WalkerModel;

typedef enum WalkerPhase {
  WALKER_PHASE_ALWAYS_ROUGH = 0,
  WALKER_PHASE_DIVERGENT = 1,
  WALKER_PHASE_CONVERGENT_FINITE = 2,
  WALKER_PHASE_CONVERGENT_ZERO = 3,
} WalkerPhase;

/**
 * An integrated RG flow trajectory.
 */
typedef struct WalkerRgFlow WalkerRgFlow;

/**
 * One trajectory: lattice, integrator, state and its private noise stream.
 */
typedef struct WalkerSimulator WalkerSimulator;

/**
 * Parameters of one trajectory.
 */
typedef struct WalkerSimParams {
  uint32_t dim;
  uint64_t n;
  double tau;
  double gamma;
  double dt;
  enum WalkerModel model;
  bool renormalize_local;
  uint64_t base_seed;
  uint64_t trajectory_id;
  /**
   * Floor on `|ψ|²` inside logarithms; `<= 0` selects the default.
   */
  double floor;
} WalkerSimParams;

typedef struct WalkerObservables {
  double width;
  double ipr;
  double mean_height;
  /**
   * Sites clipped at the floor in this evaluation.
   */
  uint64_t floored;
} WalkerObservables;

typedef struct WalkerRgParams {
  double lambda1_re;
  double lambda1_im;
  double lambda2;
  double gamma0;
  double diffusion;
  double cutoff;
  uint32_t dim;
} WalkerRgParams;

typedef struct WalkerRgSample {
  double l;
  double lambda1_re;
  double lambda1_im;
  double lambda2;
  double gamma;
} WalkerRgSample;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer stays
 * valid until the next call into this library on the same thread.
 */
const char *walker_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *walker_version(void);

/**
 * Creates a trajectory in the uniform initial state.
 *
 * # Safety
 * `params` must point to a valid struct and `out` to writable storage.
 */
enum WalkerStatus walker_simulator_new(const struct WalkerSimParams *params,
                                       struct WalkerSimulator **out);

/**
 * Restores a trajectory from a checkpoint file. `params` supplies the rates,
 * which must describe the same lattice and model as the checkpoint.
 *
 * # Safety
 * Pointers must be valid; `path` must be NUL-terminated.
 */
enum WalkerStatus walker_simulator_restore(const struct WalkerSimParams *params,
                                           const char *path,
                                           struct WalkerSimulator **out);

/**
 * # Safety
 * `sim` must come from this library and not be used afterwards; null is ignored.
 */
void walker_simulator_free(struct WalkerSimulator *sim);

/**
 * Advances the trajectory by `steps` Euler–Maruyama steps.
 *
 * # Safety
 * `sim` must be a live handle.
 */
enum WalkerStatus walker_simulator_step(struct WalkerSimulator *sim, uint64_t steps);

/**
 * # Safety
 * `sim` must be a live handle and `out` writable.
 */
enum WalkerStatus walker_simulator_time(const struct WalkerSimulator *sim, double *out);

/**
 * # Safety
 * `sim` must be a live handle and `out` writable.
 */
enum WalkerStatus walker_simulator_volume(const struct WalkerSimulator *sim, uint64_t *out);

/**
 * Copies the amplitudes as interleaved `(re, im)` pairs; `len` is the
 * buffer length in doubles and must be at least `2 * volume`.
 *
 * # Safety
 * `buf` must hold `len` writable doubles.
 */
enum WalkerStatus walker_simulator_amplitudes(const struct WalkerSimulator *sim,
                                              double *buf,
                                              size_t len);

/**
 * Width, IPR and mean height of the current state.
 *
 * # Safety
 * `sim` must be a live handle and `out` writable.
 */
enum WalkerStatus walker_simulator_observables(const struct WalkerSimulator *sim,
                                               struct WalkerObservables *out);

/**
 * Writes a binary checkpoint (state plus noise position).
 *
 * # Safety
 * `sim` must be a live handle; `path` NUL-terminated.
 */
enum WalkerStatus walker_simulator_save_checkpoint(const struct WalkerSimulator *sim,
                                                   const char *path);

/**
 * Runs `trajectories` trajectories (ids `0..trajectories`) and writes, for
 * each record time, the ensemble mean and standard error of width, IPR and
 * mean height. Output arrays hold `3 * n_times` doubles laid out as
 * `[observable][time]`; a standard error that is undefined (one trajectory)
 * is written as NaN.
 *
 * # Safety
 * `record_times` must hold `n_times` doubles; `means` and `stderrs` must
 * hold `3 * n_times` writable doubles.
 */
enum WalkerStatus walker_ensemble_run(const struct WalkerSimParams *params,
                                      uint64_t trajectories,
                                      double t_max,
                                      const double *record_times,
                                      size_t n_times,
                                      uint32_t workers,
                                      double *means,
                                      double *stderrs);

/**
 * `K_d = Λ^d / (Γ(d/2) 2^{d−1} π^{d/2})`; NaN for `d = 0`.
 */
double walker_rg_k_d(double cutoff, uint32_t dim);

/**
 * Phase of the closed-form λ^II flow. `value` receives the pole `l*`
 * (divergent phases, `+inf` when there is none), the finite limit
 * (`ConvergentFinite`) or 0 (`ConvergentZero`).
 *
 * # Safety
 * Pointers must be valid.
 */
enum WalkerStatus walker_rg_classify(const struct WalkerRgParams *params,
                                     enum WalkerPhase *phase,
                                     double *value);

/**
 * Integrates the coupled flow from `l = 0` to `l_max` with RK4 step `dl`.
 *
 * # Safety
 * Pointers must be valid.
 */
enum WalkerStatus walker_rg_integrate(const struct WalkerRgParams *params,
                                      double l_max,
                                      double dl,
                                      struct WalkerRgFlow **out);

/**
 * # Safety
 * `flow` must come from this library and not be used afterwards; null is ignored.
 */
void walker_rg_flow_free(struct WalkerRgFlow *flow);

/**
 * Number of stored samples (0 for a null handle).
 *
 * # Safety
 * `flow` must be a live handle or null.
 */
size_t walker_rg_flow_len(const struct WalkerRgFlow *flow);

/**
 * # Safety
 * `flow` must be a live handle and `out` writable.
 */
enum WalkerStatus walker_rg_flow_sample(const struct WalkerRgFlow *flow,
                                        size_t index,
                                        struct WalkerRgSample *out);

/**
 * `diverged` is set to 1 if the couplings crossed the overflow threshold,
 * with `l_end` the refined crossing scale; otherwise 0 and the last `l`.
 *
 * # Safety
 * Pointers must be valid.
 */
enum WalkerStatus walker_rg_flow_terminal(const struct WalkerRgFlow *flow,
                                          int32_t *diverged,
                                          double *l_end);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WALKER_H */
