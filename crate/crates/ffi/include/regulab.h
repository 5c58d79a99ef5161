#ifndef REGULAB_H
#define REGULAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible function.
typedef enum RegulabStatus {
  REGULAB_STATUS_OK = 0,
  REGULAB_STATUS_NULL_POINTER = 1,
  REGULAB_STATUS_INVALID_PARAMETER = 2,
  REGULAB_STATUS_BUDGET_EXCEEDED = 3,
  REGULAB_STATUS_HYPOTHESIS = 4,
  REGULAB_STATUS_INVARIANT = 5,
  REGULAB_STATUS_IO = 6,
  REGULAB_STATUS_FORMAT = 7,
  REGULAB_STATUS_BUFFER_TOO_SMALL = 8,
  REGULAB_STATUS_PANIC = 9,
} RegulabStatus;

// A real function on F_p^n with values in [0, 1].
typedef struct RegulabFunction RegulabFunction;

// A layered lower-bound instance.
typedef struct RegulabInstance RegulabInstance;

// Result of a quadratic regularity run.
typedef struct RegulabQarl RegulabQarl;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static zero-terminated string.
const char *regulab_version(void);

// Message of the last failure on this thread, or null. Valid until the next
// failing call on the same thread.
const char *regulab_last_error(void);

// Function from `p^n` values in index order (`index = Σ x_k p^k`).
//
// # Safety
// `values` must point to `len` doubles and `out` must be writable.
enum RegulabStatus regulab_function_from_values(uint32_t p,
                                                size_t n,
                                                const double *values,
                                                size_t len,
                                                struct RegulabFunction **out);

// Seeded uniformly random function.
//
// # Safety
// `out` must be writable.
enum RegulabStatus regulab_function_random(uint32_t p,
                                           size_t n,
                                           uint64_t seed,
                                           struct RegulabFunction **out);

// Reads a `.fpfn` file.
//
// # Safety
// `path` must be a zero-terminated string and `out` writable.
enum RegulabStatus regulab_function_read(const char *path, struct RegulabFunction **out);

// Writes a `.fpfn` file.
//
// # Safety
// `f` must be a live handle and `path` a zero-terminated string.
enum RegulabStatus regulab_function_write(const struct RegulabFunction *f, const char *path);

// Number of points `p^n`.
//
// # Safety
// `f` must be a live handle or null.
size_t regulab_function_len(const struct RegulabFunction *f);

// Copies the values into `buf`, which must hold `regulab_function_len` doubles.
//
// # Safety
// `f` must be a live handle and `buf` writable for `len` doubles.
enum RegulabStatus regulab_function_values(const struct RegulabFunction *f,
                                           double *buf,
                                           size_t len);

// # Safety
// `f` must be a handle from this library or null; it is invalid afterwards.
void regulab_function_free(struct RegulabFunction *f);

// Gowers `U²` norm.
//
// # Safety
// `f` must be a live handle and `out` writable.
enum RegulabStatus regulab_u2_norm(const struct RegulabFunction *f, double *out);

// Gowers `U³` norm, by direct summation.
//
// # Safety
// `f` must be a live handle and `out` writable.
enum RegulabStatus regulab_u3_norm(const struct RegulabFunction *f, double *out);

// Energy of `f` relative to the coset partition of the span of `rows`
// basis vectors given row-major with `n` coordinates each.
//
// # Safety
// `f` must be a live handle, `basis` must hold `rows·n` values and `out`
// must be writable.
enum RegulabStatus regulab_subspace_energy(const struct RegulabFunction *f,
                                           const uint32_t *basis,
                                           size_t rows,
                                           double *out);

// Whether the coset partition of the span of `basis` is `eps`-regular for
// `f`; the fraction of non-uniform cosets goes to `bad_fraction`.
//
// # Safety
// As for [`regulab_subspace_energy`]; both outputs must be writable.
enum RegulabStatus regulab_regularity(const struct RegulabFunction *f,
                                      const uint32_t *basis,
                                      size_t rows,
                                      double eps,
                                      bool *regular,
                                      double *bad_fraction);

// Builds the layered instance with `s = count` weights.
//
// # Safety
// `weights` must hold `count` doubles and `out` must be writable.
enum RegulabStatus regulab_instance_build(uint32_t p,
                                          size_t n,
                                          const double *weights,
                                          size_t count,
                                          uint64_t seed,
                                          struct RegulabInstance **out);

// Loads an instance manifest, re-deriving and checking its contents.
//
// # Safety
// `path` must be a zero-terminated string and `out` writable.
enum RegulabStatus regulab_instance_load(const char *path, struct RegulabInstance **out);

// Writes `<stem>.json` and `<stem>.fpfn` into `dir`.
//
// # Safety
// `inst` must be a live handle; `dir` and `stem` zero-terminated strings.
enum RegulabStatus regulab_instance_save(const struct RegulabInstance *inst,
                                         const char *dir,
                                         const char *stem);

// Number of layers, or 0 for null.
//
// # Safety
// `inst` must be a live handle or null.
size_t regulab_instance_layers(const struct RegulabInstance *inst);

// Codimension `D_i` of the `i`-th chain subspace, `0 ≤ i ≤ s`.
//
// # Safety
// `inst` must be a live handle and `out` writable.
enum RegulabStatus regulab_instance_codim(const struct RegulabInstance *inst,
                                          size_t i,
                                          size_t *out);

// A copy of the instance density as a new function handle.
//
// # Safety
// `inst` must be a live handle and `out` writable.
enum RegulabStatus regulab_instance_density(const struct RegulabInstance *inst,
                                            struct RegulabFunction **out);

// # Safety
// `inst` must be a handle from this library or null.
void regulab_instance_free(struct RegulabInstance *inst);

// Runs the quadratic regularity algorithm with the `paper-min` growth
// functions. Resource exhaustion is not an error: inspect
// [`regulab_qarl_success`].
//
// # Safety
// `f` must be a live handle and `out` writable.
enum RegulabStatus regulab_qarl_run(const struct RegulabFunction *f,
                                    double delta,
                                    struct RegulabQarl **out);

// # Safety
// `run` must be a live handle or null.
bool regulab_qarl_success(const struct RegulabQarl *run);

// Complexity of the returned factor.
//
// # Safety
// `run` must be a live handle or null.
size_t regulab_qarl_complexity(const struct RegulabQarl *run);

// Number of outer iterations performed.
//
// # Safety
// `run` must be a live handle or null.
size_t regulab_qarl_outer_steps(const struct RegulabQarl *run);

// The factor as JSON.
//
// # Safety
// `run` must be a live handle; `buf` writable for `len` bytes or null to
// query the size through `needed`.
enum RegulabStatus regulab_qarl_factor_json(const struct RegulabQarl *run,
                                            char *buf,
                                            size_t len,
                                            size_t *needed);

// The iteration trace as JSON lines.
//
// # Safety
// As for [`regulab_qarl_factor_json`].
enum RegulabStatus regulab_qarl_trace(const struct RegulabQarl *run,
                                      char *buf,
                                      size_t len,
                                      size_t *needed);

// # Safety
// `run` must be a handle from this library or null.
void regulab_qarl_free(struct RegulabQarl *run);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* REGULAB_H */
