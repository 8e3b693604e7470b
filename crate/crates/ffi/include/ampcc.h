#ifndef AMPCC_H
#define AMPCC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AmpccStatus {
  AMPCC_STATUS_OK = 0,
  AMPCC_STATUS_NULL_POINTER = 1,
  AMPCC_STATUS_INVALID_ARGUMENT = 2,
  AMPCC_STATUS_DIMENSION = 3,
  AMPCC_STATUS_NUMERICAL = 4,
  AMPCC_STATUS_NO_BRACKET = 5,
  AMPCC_STATUS_CHECKSUM = 6,
  AMPCC_STATUS_CONFIG = 7,
  AMPCC_STATUS_IO = 8,
  AMPCC_STATUS_PANIC = 99,
} AmpccStatus;

typedef enum AmpccDirection {
  AMPCC_DIRECTION_FORWARD = 0,
  AMPCC_DIRECTION_ADJOINT = 1,
} AmpccDirection;

typedef enum AmpccConstellation {
  AMPCC_CONSTELLATION_BPSK = 0,
  AMPCC_CONSTELLATION_PAM4 = 1,
} AmpccConstellation;

/*
 Opaque sensing operator.
 */
typedef struct AmpccSensing AmpccSensing;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread; empty if none. Valid until
 the next failing call on the same thread.
 */
const char *ampcc_last_error(void);

/*
 Library version as a NUL-terminated string.
 */
const char *ampcc_version(void);

/*
 Dense `m × n` operator with i.i.d. `N(0, 1/n)` entries.
 */
enum AmpccStatus ampcc_sensing_gaussian(size_t m,
                                        size_t n,
                                        uint64_t seed,
                                        struct AmpccSensing **out);

/*
 Subsampled orthonormal Hadamard operator; `n` must be a power of two.
 */
enum AmpccStatus ampcc_sensing_hadamard(size_t m,
                                        size_t n,
                                        uint64_t seed,
                                        bool signs,
                                        struct AmpccSensing **out);

/*
 Writes the operator's row and column counts.

 # Safety
 `h` must come from a sensing constructor; `m` and `n` must be writable.
 */
enum AmpccStatus ampcc_sensing_dims(const struct AmpccSensing *h, size_t *m, size_t *n);

/*
 `out = A·x` (forward, `x` has `n` entries) or `out = Aᵀ·x` (adjoint).

 # Safety
 `x` and `out` must point to `x_len` and `out_len` doubles.
 */
enum AmpccStatus ampcc_sensing_apply(const struct AmpccSensing *h,
                                     enum AmpccDirection dir,
                                     const double *x,
                                     size_t x_len,
                                     double *out,
                                     size_t out_len);

/*
 Releases an operator. Null is ignored.

 # Safety
 `h` must come from a sensing constructor and not be used afterwards.
 */
void ampcc_sensing_free(struct AmpccSensing *h);

/*
 In-place orthonormal Walsh-Hadamard transform.

 # Safety
 `v` must point to `len` doubles.
 */
enum AmpccStatus ampcc_fht(double *v, size_t len);

/*
 MMSE of a uniform constellation symbol at SNR `rho`.

 # Safety
 `out` must be writable.
 */
enum AmpccStatus ampcc_mmse_scalar(enum AmpccConstellation c, double rho, double *out);

/*
 AWGN channel transfer `δ/(v+σ²)`, or its inverse when `inverse` is set.
 */
double ampcc_phi_awgn(double x, double delta, double sigma2, bool inverse);

/*
 Clipping threshold `z` and power renormalizer `alpha` for a clipping ratio in dB.

 # Safety
 `z` and `alpha` must be writable.
 */
enum AmpccStatus ampcc_clip_params(double cr_db, double *z, double *alpha);

/*
 Scalar SE fixed point for uncoded transmission over AWGN.

 # Safety
 The three out-pointers must be writable.
 */
enum AmpccStatus ampcc_se_fixed_point(enum AmpccConstellation c,
                                      double delta,
                                      double sigma2,
                                      double *rho_star,
                                      double *v_star,
                                      bool *error_free);

/*
 `R_AC·K/(K+W-1)`.
 */
double ampcc_asc_rate(double r_ac, size_t k, size_t w);

/*
 Rate after puncturing a fraction `f` of the symbols.
 */
double ampcc_puncture_rate(double r, double f);

/*
 AMP for uncoded symbols over AWGN. Writes the estimate (`n` entries) and the
 number of iterations run.

 # Safety
 `y` must hold `m` doubles, `c_hat` must hold `n`, `iterations` must be writable.
 */
enum AmpccStatus ampcc_amp_run(const struct AmpccSensing *h,
                               enum AmpccConstellation c,
                               const double *y,
                               size_t y_len,
                               double sigma2,
                               size_t t_max,
                               double *c_hat,
                               size_t c_len,
                               size_t *iterations);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AMPCC_H */
