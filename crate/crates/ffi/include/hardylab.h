#ifndef HARDYLAB_H
#define HARDYLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum HlStatus {
  HL_STATUS_OK = 0,
  HL_STATUS_NULL_POINTER = 1,
  HL_STATUS_INVALID_ARGUMENT = 2,
  HL_STATUS_DOMAIN = 3,
  HL_STATUS_DIVERGENCE = 4,
  HL_STATUS_NON_CONVERGENCE = 5,
  HL_STATUS_INTERNAL = 99,
} HlStatus;

/**
 * Tail selector for [`hl_chain_new`].
 */
typedef enum HlTail {
  HL_TAIL_SQUARE = 0,
  HL_TAIL_POWER = 1,
  HL_TAIL_RHO_STAR = 2,
} HlTail;

/**
 * A weight chain `L_1 ... L_{m-1} tail(L_m)` at scale `R`.
 */
typedef struct HlChain HlChain;

/**
 * A domain with a distance-to-boundary oracle.
 */
typedef struct HlDomain HlDomain;

/**
 * A test function.
 */
typedef struct HlFunction HlFunction;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *hl_version(void);

/**
 * Copies the calling thread's last error message into `buf` (truncated and
 * NUL-terminated) and returns the full message length in bytes. Pass a null
 * `buf` to query the length.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t hl_last_error_message(char *buf, size_t len);

/**
 * `L_m(t)` for `t` in `(0, 1]`.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum HlStatus hl_eval_L(uint32_t m, double t, double *out);

/**
 * `Y_m(k)`, the majorant of `L_m` on `[3^k, 3^{k+1})`, for `k < 0`.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum HlStatus hl_eval_Y(uint32_t m, int64_t k, double *out);

/**
 * The exponent `rho*(t)` for which `L_m^{1 + rho*} = L_m L_{m+1}^beta`.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum HlStatus hl_rho_star(uint32_t m, double beta, double t, double *out);

/**
 * `C(theta)` with `L_m^theta <= C(theta) L_{m+1}^2`.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum HlStatus hl_theta_constant(double theta, double *out);

/**
 * `int_{S^{d-1}} |e . w| dw`.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum HlStatus hl_bbm_constant(uint32_t d, double *out);

/**
 * New weight chain. `beta` is ignored for [`HlTail::Square`].
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum HlStatus hl_chain_new(uint32_t m,
                           double r,
                           enum HlTail tail,
                           double beta,
                           struct HlChain **out);

/**
 * Chain value at `t` in `(0, R]`.
 *
 * # Safety
 * `chain` must be a live handle and `out` valid for writes.
 */
enum HlStatus hl_chain_eval(const struct HlChain *chain, double t, double *out);

/**
 * # Safety
 * `chain` must be null or a handle from [`hl_chain_new`] not yet freed.
 */
void hl_chain_free(struct HlChain *chain);

/**
 * Domain from its JSON description, e.g.
 * `{"variant":"interval","half_length":1.0}`.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` valid for writes.
 */
enum HlStatus hl_domain_from_json(const char *json, struct HlDomain **out);

/**
 * Distance from the `dim`-vector `x` to the boundary.
 *
 * # Safety
 * `domain` must be a live handle, `x` valid for `dim` reads and `out` valid
 * for writes.
 */
enum HlStatus hl_domain_distance(const struct HlDomain *domain,
                                 const double *x,
                                 size_t dim,
                                 double *out);

/**
 * # Safety
 * `domain` must be null or a handle from [`hl_domain_from_json`] not yet freed.
 */
void hl_domain_free(struct HlDomain *domain);

/**
 * Test function from its JSON description, e.g.
 * `{"descriptor":{"kind":"linear","slope":1.0,"intercept":0.0}}`.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` valid for writes.
 */
enum HlStatus hl_function_from_json(const char *json, struct HlFunction **out);

/**
 * # Safety
 * `function` must be null or a handle from [`hl_function_from_json`] not yet freed.
 */
void hl_function_free(struct HlFunction *function);

/**
 * `int_a^b int_a^b |u(x) - u(y)| / |x - y|^{1+s} dx dy`.
 *
 * # Safety
 * `function` must be a live handle and `out` valid for writes.
 */
enum HlStatus hl_gagliardo_1d(const struct HlFunction *function,
                              double a,
                              double b,
                              double s,
                              double *out);

/**
 * Weighted boundary integral `int |u - c| / delta^sigma chain(delta)`.
 * `s` in `(0, 1)` gives `sigma = s` with `c = 0`; `s = 1` gives the BV
 * weight `sigma = 1` with `c` the domain average of `u`.
 *
 * # Safety
 * All handles must be live and `out` valid for writes.
 */
enum HlStatus hl_weighted_lhs(const struct HlFunction *function,
                              const struct HlDomain *domain,
                              const struct HlChain *chain,
                              double s,
                              double *out);

/**
 * Measured constant `lhs / (2^m [u]_BV)` of the BV inequality with the
 * square tail; `pass` receives 1 when it is finite.
 *
 * # Safety
 * Handles must be live and both out-pointers valid for writes.
 */
enum HlStatus hl_verify_main(const struct HlFunction *function,
                             const struct HlDomain *domain,
                             uint32_t m,
                             double r,
                             double *constant,
                             int32_t *pass);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HARDYLAB_H */
