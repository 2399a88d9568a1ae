#ifndef CONAL_H
#define CONAL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ConalStatus {
  CONAL_STATUS_OK = 0,
  CONAL_STATUS_NULL_POINTER = 1,
  CONAL_STATUS_INVALID_ARGUMENT = 2,
  CONAL_STATUS_NOT_SYMMETRIC = 3,
  CONAL_STATUS_NOT_POSITIVE_DEFINITE = 4,
  CONAL_STATUS_DIMENSION_MISMATCH = 5,
  CONAL_STATUS_SINGULAR = 6,
  CONAL_STATUS_DOMAIN = 7,
  CONAL_STATUS_BARRIER_BREACH = 8,
  CONAL_STATUS_PARSE = 9,
  CONAL_STATUS_PANIC = 10,
} ConalStatus;

/**
 * A cone specification (Löwner or quadratic).
 */
typedef struct ConalCone ConalCone;

/**
 * An oscillator network.
 */
typedef struct ConalNetwork ConalNetwork;

/**
 * A symmetric positive definite matrix.
 */
typedef struct ConalSpd ConalSpd;

/**
 * A simulated trajectory.
 */
typedef struct ConalTrajectory ConalTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *conal_version(void);

/**
 * Message of the last failed call on this thread, or NULL. Valid until the
 * next failing call on the same thread.
 */
const char *conal_last_error(void);

/**
 * Builds an SPD matrix from `n*n` row-major doubles.
 *
 * # Safety
 * `data` must point to `n*n` readable doubles and `out` must be writable.
 */
enum ConalStatus conal_spd_new(const double *data, size_t n, struct ConalSpd **out);

/**
 * # Safety
 * `p` must be NULL or a handle from [`conal_spd_new`] not yet freed.
 */
void conal_spd_free(struct ConalSpd *p);

/**
 * # Safety
 * `p` must be a live handle.
 */
size_t conal_spd_dim(const struct ConalSpd *p);

/**
 * Affine-invariant distance between two SPD matrices.
 *
 * # Safety
 * Handles must be live and `out` writable.
 */
enum ConalStatus conal_spd_distance(const struct ConalSpd *a,
                                    const struct ConalSpd *b,
                                    double *out);

/**
 * # Safety
 * `out` must be writable.
 */
enum ConalStatus conal_cone_loewner(size_t n, struct ConalCone **out);

/**
 * Quadratic cone with parameter `mu` in `(0, n)`.
 *
 * # Safety
 * `out` must be writable.
 */
enum ConalStatus conal_cone_quadratic(size_t n, double mu, struct ConalCone **out);

/**
 * # Safety
 * `c` must be NULL or a live cone handle.
 */
void conal_cone_free(struct ConalCone *c);

/**
 * Membership of the symmetric `n*n` row-major matrix `x` in the cone at `sigma`.
 * `min_margin` may be NULL.
 *
 * # Safety
 * Handles must be live, `x` must hold `n*n` doubles, `member` must be writable.
 */
enum ConalStatus conal_cone_check(const struct ConalCone *cone,
                                  const struct ConalSpd *sigma,
                                  const double *x,
                                  size_t n,
                                  int *member,
                                  double *min_margin);

/**
 * Decides `a ≤ b`. `min_margin` may be NULL.
 *
 * # Safety
 * Handles must be live and `ordered` writable.
 */
enum ConalStatus conal_spd_order(const struct ConalCone *cone,
                                 const struct ConalSpd *a,
                                 const struct ConalSpd *b,
                                 int *ordered,
                                 double *min_margin);

/**
 * Ring network on `n` agents with frequencies `omega`, optional undirected
 * chords given as `n_chords` index pairs, and barrier-tan coupling `gain`.
 *
 * # Safety
 * `omega` must hold `n` doubles, `chords` `2*n_chords` indices (or be NULL
 * when `n_chords` is 0), `out` writable.
 */
enum ConalStatus conal_network_ring(const double *omega,
                                    size_t n,
                                    const size_t *chords,
                                    size_t n_chords,
                                    double gain,
                                    struct ConalNetwork **out);

/**
 * Network from a JSON document `{"omega": [...], "edges": [...], "sign": ...}`.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` writable.
 */
enum ConalStatus conal_network_from_json(const char *json, struct ConalNetwork **out);

/**
 * # Safety
 * `net` must be NULL or a live network handle.
 */
void conal_network_free(struct ConalNetwork *net);

/**
 * # Safety
 * `net` must be a live handle.
 */
size_t conal_network_agents(const struct ConalNetwork *net);

/**
 * Fixed-step RK4 simulation from `theta0` over `[0, horizon]`.
 *
 * # Safety
 * `net` must be live, `theta0` must hold `n` doubles, `out` writable.
 */
enum ConalStatus conal_simulate(const struct ConalNetwork *net,
                                const double *theta0,
                                size_t n,
                                double horizon,
                                double dt,
                                struct ConalTrajectory **out);

/**
 * # Safety
 * `t` must be NULL or a live trajectory handle.
 */
void conal_trajectory_free(struct ConalTrajectory *t);

/**
 * Number of stored samples.
 *
 * # Safety
 * `t` must be a live handle.
 */
size_t conal_trajectory_len(const struct ConalTrajectory *t);

/**
 * Copies sample `index` into `out` (length `n`) and its time into `time` (may be NULL).
 *
 * # Safety
 * `t` must be live and `out` must hold `n` writable doubles.
 */
enum ConalStatus conal_trajectory_state(const struct ConalTrajectory *t,
                                        size_t index,
                                        double *out,
                                        size_t n,
                                        double *time);

/**
 * Phase-lock test over the trailing `window`. `sync_frequency` may be NULL.
 *
 * # Safety
 * `t` must be live and `locked` writable.
 */
enum ConalStatus conal_phase_lock(const struct ConalTrajectory *t,
                                  double window,
                                  double tol,
                                  int *locked,
                                  double *sync_frequency);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CONAL_H */
