#ifndef CLUSTERFORGE_H
#define CLUSTERFORGE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result codes. Zero is success.
 */
typedef enum CfStatus {
  CF_STATUS_OK = 0,
  CF_STATUS_NULL_POINTER = 1,
  CF_STATUS_INVALID_ARGUMENT = 2,
  CF_STATUS_DOMAIN = 3,
  CF_STATUS_ADMISSIBILITY = 4,
  CF_STATUS_PRECONDITION = 5,
  CF_STATUS_SIZE_CAP = 6,
  CF_STATUS_PARSE = 7,
  CF_STATUS_CHECK_FAILED = 8,
  CF_STATUS_INTERNAL = 9,
  CF_STATUS_PANIC = 10,
} CfStatus;

/*
 Graph family selector for `cf_graph_count`.
 */
typedef enum CfFamily {
  CF_FAMILY_CONNECTED = 0,
  CF_FAMILY_TREE = 1,
  CF_FAMILY_FOREST = 2,
  CF_FAMILY_ROOTED_Z = 3,
  CF_FAMILY_Z_CROSS = 4,
} CfFamily;

/*
 Opaque grand-canonical oracle. Owns a copy of its potential.
 */
typedef struct CfOracle CfOracle;

/*
 Opaque pair potential.
 */
typedef struct CfPotential CfPotential;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Length of the last error message on this thread, excluding the
 terminator, or 0 if none. Copies at most `len - 1` bytes plus a NUL into
 `buf` when `buf` is non-null.

 # Safety
 `buf` must be null or point to `len` writable bytes.
 */
uintptr_t cf_last_error_message(char *buf, uintptr_t len);

/*
 Library name and version as a static NUL-terminated string.
 */
const char *cf_version(void);

/*
 # Safety
 `out` must be null or point to a writable handle slot.
 */
enum CfStatus cf_potential_hard_sphere(double sigma, struct CfPotential **out);

/*
 # Safety
 `out` must be null or point to a writable handle slot.
 */
enum CfStatus cf_potential_square_well(double sigma,
                                       double lambda,
                                       double epsilon,
                                       struct CfPotential **out);

/*
 Truncated Lennard-Jones with a hard core at `r_core` and cutoff `r_cut`.

 # Safety
 `out` must be null or point to a writable handle slot.
 */
enum CfStatus cf_potential_lennard_jones(double epsilon,
                                         double sigma,
                                         double r_core,
                                         double r_cut,
                                         struct CfPotential **out);

/*
 # Safety
 `pot` must be null or a handle from a `cf_potential_*` constructor that
 has not been freed.
 */
void cf_potential_free(struct CfPotential *pot);

/*
 u(r); +infinity inside a hard core.

 # Safety
 `pot` must be a live potential handle and `out` a writable double.
 */
enum CfStatus cf_potential_evaluate(const struct CfPotential *pot, double r, double *out);

/*
 Regularity constant c_β, stability constant B and admissibility bound z_max.

 # Safety
 `pot` must be a live potential handle; each out-pointer may be null.
 */
enum CfStatus cf_constants(const struct CfPotential *pot,
                           double beta,
                           double *c_beta,
                           double *b,
                           double *z_max);

/*
 Tree weight w(z) for the potential at inverse temperature β.

 # Safety
 `pot` must be a live potential handle and `out` a writable double.
 */
enum CfStatus cf_tree_weight(const struct CfPotential *pot, double beta, double z, double *out);

/*
 Principal branch W₀(x) for x in [−1/e, 0].

 # Safety
 `out` must be a writable double.
 */
enum CfStatus cf_lambert_w0(double x, double *out);

/*
 Number of graphs of a family on `n_white` white and `n_black` black vertices.

 # Safety
 `out` must be a writable u64.
 */
enum CfStatus cf_graph_count(enum CfFamily family,
                             uintptr_t n_white,
                             uintptr_t n_black,
                             uint64_t *out);

/*
 Capped grand-canonical oracle on a product Gauss-Legendre grid.

 # Safety
 `pot` must be a live potential handle and `out` a writable handle slot.
 */
enum CfStatus cf_oracle_new(const struct CfPotential *pot,
                            double beta,
                            double z,
                            double box_side,
                            uintptr_t n_cap,
                            uintptr_t grid_panels,
                            uintptr_t grid_order,
                            struct CfOracle **out);

/*
 # Safety
 `oracle` must be null or a live handle from `cf_oracle_new`.
 */
void cf_oracle_free(struct CfOracle *oracle);

/*
 ρ^(m) at `m` points given as 3m packed coordinates.

 # Safety
 `oracle` must be live, `xyz` must hold 3·m doubles, outputs writable or null.
 */
enum CfStatus cf_oracle_rho(const struct CfOracle *oracle,
                            const double *xyz,
                            uintptr_t m,
                            double *value,
                            double *stderr);

/*
 Ursell function ω^(m), m in 2..=4, from oracle densities.

 # Safety
 As for `cf_oracle_rho`.
 */
enum CfStatus cf_oracle_ursell(const struct CfOracle *oracle,
                               const double *xyz,
                               uintptr_t m,
                               double *value,
                               double *stderr);

/*
 Runs the command-line interface with `argc` arguments (argv[0] included)
 and returns its exit code.

 # Safety
 `argv` must hold `argc` NUL-terminated strings.
 */
int32_t cf_run_cli(uintptr_t argc, const char *const *argv);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CLUSTERFORGE_H */
