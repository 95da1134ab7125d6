#ifndef OTLAB_H
#define OTLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum OtlabStatus {
  OTLAB_STATUS_OK = 0,
  OTLAB_STATUS_NULL_ARGUMENT = 1,
  OTLAB_STATUS_INVALID_ARGUMENT = 2,
  OTLAB_STATUS_IO = 3,
  OTLAB_STATUS_SOLVER = 4,
  OTLAB_STATUS_CONFIG = 5,
  /**
   * A scenario ran but at least one check failed.
   */
  OTLAB_STATUS_SCENARIO_FAILED = 6,
  OTLAB_STATUS_PANIC = 7,
} OtlabStatus;

/**
 * Verdicts of the cone classification.
 */
typedef enum OtlabConeVerdict {
  OTLAB_CONE_VERDICT_HALF_SPACE = 0,
  OTLAB_CONE_VERDICT_ACUTE = 1,
  OTLAB_CONE_VERDICT_RIGHT_ANGLE = 2,
  OTLAB_CONE_VERDICT_OBTUSE = 3,
  OTLAB_CONE_VERDICT_NO_HOMOGENEOUS_MAP = 4,
} OtlabConeVerdict;

/**
 * A solved semi-discrete transport plan.
 */
typedef struct OtlabPlan OtlabPlan;

/**
 * Exponent table; undefined entries are NaN.
 */
typedef struct OtlabExponents {
  double alpha;
  double deg_u;
  double deg_v;
  double beta_u;
  double beta_v;
  double beta_flat;
  double beta_cone_u;
  double beta_cone_v;
  double gamma_vol;
  double chi_exponent;
  double kappa_star;
} OtlabExponents;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread; empty if none. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *otlab_last_error(void);

/**
 * Solves the transport from the uniform density on the convex polygon
 * `source_xy` (`n_source` counter-clockwise vertices, interleaved x, y) to
 * `n_sites` points `sites_xy`. `masses` may be null for equal masses;
 * otherwise the masses are rescaled to the source area.
 *
 * # Safety
 * The arrays must hold `2·n_source`, `2·n_sites` and `n_sites` values;
 * `out` must be a valid pointer.
 */
enum OtlabStatus otlab_plan_solve(const double *source_xy,
                                  size_t n_source,
                                  const double *sites_xy,
                                  const double *masses,
                                  size_t n_sites,
                                  struct OtlabPlan **out);

/**
 * Loads a plan document written by [`otlab_plan_save`] or the CLI.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum OtlabStatus otlab_plan_load(const char *path, struct OtlabPlan **out);

/**
 * # Safety
 * `plan` must come from this library and `path` be NUL-terminated.
 */
enum OtlabStatus otlab_plan_save(const struct OtlabPlan *plan, const char *path);

/**
 * Releases a plan; null is ignored.
 *
 * # Safety
 * `plan` must come from this library and not be used afterwards.
 */
void otlab_plan_free(struct OtlabPlan *plan);

/**
 * Number of sites; 0 for a null plan.
 *
 * # Safety
 * `plan` must be null or come from this library.
 */
size_t otlab_plan_num_sites(const struct OtlabPlan *plan);

/**
 * Largest relative cell mass error of the solve; NaN for a null plan.
 *
 * # Safety
 * `plan` must be null or come from this library.
 */
double otlab_plan_residual(const struct OtlabPlan *plan);

/**
 * Copies the dual weights into `out`, which holds `len` values.
 *
 * # Safety
 * `out` must point to `len` writable doubles.
 */
enum OtlabStatus otlab_plan_weights(const struct OtlabPlan *plan, double *out, size_t len);

/**
 * Value, gradient and maximizing site of `u(x) = max_i(⟨x, y_i⟩ − ψ_i)`.
 * Any output pointer may be null.
 *
 * # Safety
 * Non-null outputs must be writable; `gradient` holds two doubles.
 */
enum OtlabStatus otlab_plan_potential(const struct OtlabPlan *plan,
                                      double x,
                                      double y,
                                      double *u,
                                      double *gradient,
                                      size_t *site);

/**
 * Classifies the tangent cones `[source_lo, source_hi]` and
 * `[target_lo, target_hi]` (degrees). `q` receives the witness
 * `(q11, q12, q22)` or three NaNs when none exists; it may be null.
 *
 * # Safety
 * `verdict` must be writable; `q`, if non-null, holds three doubles.
 */
enum OtlabStatus otlab_classify(double source_lo_deg,
                                double source_hi_deg,
                                double target_lo_deg,
                                double target_hi_deg,
                                enum OtlabConeVerdict *verdict,
                                double *q);

/**
 * # Safety
 * `out` must be writable.
 */
enum OtlabStatus otlab_exponents(double n,
                                 double m,
                                 double l,
                                 double k,
                                 struct OtlabExponents *out);

/**
 * Runs a scenario file and, when `out_dir` is non-null, writes its outputs
 * there. Returns [`OtlabStatus::ScenarioFailed`] when a check fails.
 *
 * # Safety
 * `path` and non-null `out_dir` must be NUL-terminated strings.
 */
enum OtlabStatus otlab_run_scenario_file(const char *path, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OTLAB_H */
