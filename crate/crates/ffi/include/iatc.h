#ifndef IATC_H
#define IATC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum IatcStatus {
  IATC_STATUS_OK = 0,
  IATC_STATUS_NULL_POINTER = 1,
  IATC_STATUS_INVALID_UTF8 = 2,
  IATC_STATUS_PARSE = 3,
  IATC_STATUS_VALIDATION = 4,
  IATC_STATUS_DOMAIN = 5,
  IATC_STATUS_NUMERICAL = 6,
  IATC_STATUS_INFEASIBLE_TRAFFIC = 7,
  IATC_STATUS_IO = 8,
  /**
   * An output buffer is shorter than the number of transmitting nodes.
   */
  IATC_STATUS_BUFFER_TOO_SMALL = 9,
  IATC_STATUS_PANIC = 10,
} IatcStatus;

/**
 * Opaque scenario handle.
 */
typedef struct IatcScenario IatcScenario;

/**
 * Per-node loss breakdown, mirroring the Rust `LossBreakdown`.
 */
typedef struct IatcLossBreakdown {
  uint32_t node_id;
  double beta;
  double mu;
  double p_dly;
  double p_ov;
  double p_out;
  double p_loss_exact;
  double p_loss_first_order;
  double r_n;
  double r_exact;
  bool unstable;
  bool clamped;
} IatcLossBreakdown;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Parses a TOML scenario. On success `*out` receives a handle to free with
 * [`iatc_scenario_free`].
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` a valid pointer.
 */
enum IatcStatus iatc_scenario_from_toml(const char *toml, struct IatcScenario **out);

/**
 * Opens the bundled ten-node reference scenario.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum IatcStatus iatc_scenario_reference(struct IatcScenario **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `h` must come from this library and not be used afterwards.
 */
void iatc_scenario_free(struct IatcScenario *h);

/**
 * Number of transmitting nodes, the length of every per-node array.
 *
 * # Safety
 * `h` must be a live handle and `out` a valid pointer.
 */
enum IatcStatus iatc_node_count(const struct IatcScenario *h, size_t *out);

/**
 * Node ids in evaluation order.
 *
 * # Safety
 * `ids` must point to `len` writable entries.
 */
enum IatcStatus iatc_node_ids(const struct IatcScenario *h, uint32_t *ids, size_t len);

/**
 * Largest threshold of each node that keeps its queue stable.
 *
 * # Safety
 * `bounds` must point to `len` writable entries.
 */
enum IatcStatus iatc_bounds(const struct IatcScenario *h, double *bounds, size_t len);

/**
 * Thresholds from the scenario file, with unset nodes at their bound.
 *
 * # Safety
 * `betas` must point to `len` writable entries.
 */
enum IatcStatus iatc_default_betas(const struct IatcScenario *h, double *betas, size_t len);

/**
 * Loss breakdown of every node under `betas`.
 *
 * # Safety
 * `betas` must hold `len` readable entries and `out` `out_len` writable ones.
 */
enum IatcStatus iatc_evaluate(const struct IatcScenario *h,
                              const double *betas,
                              size_t len,
                              struct IatcLossBreakdown *out,
                              size_t out_len);

/**
 * Runs the distributed optimizer. `converged` and `rounds` may be null.
 *
 * # Safety
 * `betas` must point to `len` writable entries.
 */
enum IatcStatus iatc_ia_dtc(const struct IatcScenario *h,
                            double *betas,
                            size_t len,
                            bool *converged,
                            size_t *rounds);

/**
 * Runs the centralized optimizer for the scenario's source node.
 * `r_best` and `converged` may be null.
 *
 * # Safety
 * `betas` must point to `len` writable entries.
 */
enum IatcStatus iatc_ia_tc(const struct IatcScenario *h,
                           double *betas,
                           size_t len,
                           double *r_best,
                           bool *converged);

/**
 * Copies the calling thread's last error message into `buf` (NUL-terminated,
 * truncated to fit) and returns the full message length excluding the NUL.
 * Pass a null `buf` to query the length.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t iatc_last_error(char *buf, size_t len);

/**
 * Static description of a status code.
 */
const char *iatc_status_name(enum IatcStatus status);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IATC_H */
