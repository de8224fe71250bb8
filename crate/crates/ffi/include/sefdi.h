#ifndef SEFDI_H
#define SEFDI_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define SEFDI_OK 0

#define SEFDI_ERR_NULL -1

#define SEFDI_ERR_LENGTH -2

#define SEFDI_ERR_PARSE -3

#define SEFDI_ERR_NUMERICAL -4

#define SEFDI_ERR_NO_CONVERGENCE -5

#define SEFDI_ERR_INVALID_ARGUMENT -6

#define SEFDI_ERR_PANIC -99

// Parsed case with its DC measurement model.
typedef struct SefdiCase SefdiCase;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Parses a NUL-terminated JSON case document. On success `*out` owns a new
// handle.
//
// # Safety
// `json` must be a valid C string and `out` a valid pointer.
int32_t sefdi_case_parse(const char *json, struct SefdiCase **out);

// Releases a handle. Null is ignored.
//
// # Safety
// `case` must come from [`sefdi_case_parse`] and not be used afterwards.
void sefdi_case_free(struct SefdiCase *case_);

// Number of meters `m` and DC state dimension `k`.
//
// # Safety
// `case` must be a live handle; outputs may be null.
int32_t sefdi_case_dims(const struct SefdiCase *case_, size_t *meters, size_t *states);

// Copies the `m x k` DC Jacobian into `out`, row-major.
//
// # Safety
// `out` must point to `len` writable doubles.
int32_t sefdi_dc_jacobian(const struct SefdiCase *case_, double *out, size_t len);

// DC weighted least-squares estimate of `z`. `squared_error` and
// `objective` may be null.
//
// # Safety
// `z` must hold `m` doubles and `state` room for `k`.
int32_t sefdi_estimate_dc(const struct SefdiCase *case_,
                          const double *z,
                          size_t m,
                          double *state,
                          size_t k,
                          double *squared_error,
                          double *objective);

// Chi-square test of `z` at significance `alpha`. `detected` receives 0 or 1.
//
// # Safety
// `z` must hold `m` doubles; outputs may be null.
int32_t sefdi_chi_square(const struct SefdiCase *case_,
                         const double *z,
                         size_t m,
                         double alpha,
                         double *statistic,
                         double *threshold,
                         int32_t *detected);

// Stealth attack `a = H c`.
//
// # Safety
// `c` must hold `k` doubles and `a` room for `m`.
int32_t sefdi_craft_attack(const struct SefdiCase *case_,
                           const double *c,
                           size_t k,
                           double *a,
                           size_t m);

// Sets `*stealthy` to 1 when `a` lies in the column space of `H`, else 0.
//
// # Safety
// `a` must hold `m` doubles and `stealthy` be valid.
int32_t sefdi_verify_stealth(const struct SefdiCase *case_,
                             const double *a,
                             size_t m,
                             int32_t *stealthy);

// Message of the last failed call on this thread; empty after a success.
// Valid until the next call into the library on the same thread.
const char *sefdi_last_error_message(void);

// Library version as a static C string.
const char *sefdi_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SEFDI_H */
