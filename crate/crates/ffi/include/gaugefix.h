/* C interface for the gaugefix library. Generated by cbindgen; do not edit. */

#pragma once

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum GfStatus {
  GF_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  GF_STATUS_NULL_ARGUMENT = 1,
  /**
   * A buffer length did not match the network's dimensions.
   */
  GF_STATUS_DIMENSION_MISMATCH = 2,
  /**
   * A numeric argument was out of range (e.g. non-positive scale).
   */
  GF_STATUS_INVALID_VALUE = 3,
  /**
   * Training diverged before completing.
   */
  GF_STATUS_DIVERGED = 4,
  /**
   * An internal panic was caught at the boundary.
   */
  GF_STATUS_PANIC = 5,
} GfStatus;

/**
 * Opaque handle to a one-hidden-layer ReLU network.
 */
typedef struct GfNetwork GfNetwork;

/**
 * Options for a one-shot training run on the built-in regression task.
 */
typedef struct GfTrainOptions {
  uint64_t seed;
  uintptr_t width;
  uintptr_t steps;
  uintptr_t n_train;
  uintptr_t n_val;
  double lr;
  double lambda;
  double eps;
  double noise_std;
} GfTrainOptions;

/**
 * Summary of a finished training run.
 */
typedef struct GfTrainSummary {
  double train_mse;
  double val_mse;
  double gauge_value;
  double mean_abs_v;
  /**
   * 0 = stable, 1 = marginal, 2 = unstable.
   */
  int32_t stability;
  uintptr_t steps_run;
} GfTrainSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates a freshly initialized network (weights `N(0, 1/fan_in)`, zero
 * biases, deterministic in `seed`). Returns null if a dimension is zero.
 */
struct GfNetwork *gf_network_new(uintptr_t d, uintptr_t h, uintptr_t m, uint64_t seed);

/**
 * Releases a handle created by [`gf_network_new`]. Null is a no-op.
 *
 * # Safety
 * `net` must be a pointer previously returned by this library and not
 * already freed.
 */
void gf_network_free(struct GfNetwork *net);

/**
 * Input dimension of a handle; 0 for null.
 *
 * # Safety
 * `net` must be null or a live pointer from [`gf_network_new`].
 */
uintptr_t gf_network_input_dim(const struct GfNetwork *net);

/**
 * Hidden width of a handle; 0 for null.
 *
 * # Safety
 * `net` must be null or a live pointer from [`gf_network_new`].
 */
uintptr_t gf_network_hidden_dim(const struct GfNetwork *net);

/**
 * Output dimension of a handle; 0 for null.
 *
 * # Safety
 * `net` must be null or a live pointer from [`gf_network_new`].
 */
uintptr_t gf_network_output_dim(const struct GfNetwork *net);

/**
 * Forward pass: writes `f(x)` into `y_out`.
 *
 * # Safety
 * `x` must point to `x_len` doubles and `y_out` to `y_len` writable
 * doubles.
 */
enum GfStatus gf_network_forward(const struct GfNetwork *net,
                                 const double *x,
                                 uintptr_t x_len,
                                 double *y_out,
                                 uintptr_t y_len);

/**
 * Value of the gauge functional `G` at the handle's parameters.
 *
 * # Safety
 * `out` must be a valid writable pointer.
 */
enum GfStatus gf_gauge_functional(const struct GfNetwork *net, double eps, double *out);

/**
 * Writes the per-neuron invariant coordinate `u` and imbalance coordinate
 * `v` into the provided buffers of length `len = hidden_dim`.
 *
 * # Safety
 * `u_out` and `v_out` must each point to `len` writable doubles.
 */
enum GfStatus gf_gauge_coords(const struct GfNetwork *net,
                              double eps,
                              double *u_out,
                              double *v_out,
                              uintptr_t len);

/**
 * Applies the neuron-wise rescaling in place; `scales` must hold
 * `hidden_dim` strictly positive entries. The network function is
 * preserved exactly up to floating-point round-off.
 *
 * # Safety
 * `scales` must point to `len` doubles.
 */
enum GfStatus gf_apply_gauge(struct GfNetwork *net, const double *scales, uintptr_t len);

/**
 * Writes the balancing rescaling `s*_i = sqrt((n2_i+eps)/(n1_i+eps))`
 * into `scales_out` without modifying the network.
 *
 * # Safety
 * `scales_out` must point to `len` writable doubles.
 */
enum GfStatus gf_balanced_scales(const struct GfNetwork *net,
                                 double eps,
                                 double *scales_out,
                                 uintptr_t len);

/**
 * Mean absolute output deviation between the network and its gauge
 * transform over `n_inputs` row-major inputs of dimension `input_dim`.
 *
 * # Safety
 * `scales` must point to `scales_len` doubles and `inputs` to
 * `n_inputs * input_dim` doubles; `out` must be writable.
 */
enum GfStatus gf_invariance_error(const struct GfNetwork *net,
                                  const double *scales,
                                  uintptr_t scales_len,
                                  const double *inputs,
                                  uintptr_t n_inputs,
                                  double *out);

/**
 * Trains a fresh width-`width` network on the built-in synthetic
 * regression task and fills `summary`. Losses are reported from the last
 * finite iterate even when the run is truncated as unstable.
 *
 * # Safety
 * `summary` must be a valid writable pointer.
 */
enum GfStatus gf_train_regression(struct GfTrainOptions options, struct GfTrainSummary *summary);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus
