/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef BOLTZGRAD_H
#define BOLTZGRAD_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. `Ok` is zero.
 */
typedef enum BgStatus {
  BG_STATUS_OK = 0,
  BG_STATUS_NULL_POINTER = 1,
  BG_STATUS_INVALID_UTF8 = 2,
  BG_STATUS_INVALID_ARGUMENT = 3,
  BG_STATUS_DIMENSION = 4,
  BG_STATUS_NOT_POSITIVE_DEFINITE = 5,
  BG_STATUS_TRUNCATION = 6,
  BG_STATUS_NUMERICAL = 7,
  BG_STATUS_CONFIG = 8,
  BG_STATUS_EXCLUDED = 9,
  BG_STATUS_IO = 10,
  BG_STATUS_OUT_OF_RANGE = 11,
  BG_STATUS_PANIC = 12,
} BgStatus;

/**
 * Verdict of an experiment record.
 */
typedef enum BgVerdict {
  BG_VERDICT_PASS = 0,
  BG_VERDICT_FAIL = 1,
  BG_VERDICT_EXCLUDED = 2,
} BgVerdict;

/**
 * Parsed, validated experiment configuration.
 */
typedef struct BgConfig BgConfig;

/**
 * Complex Gaussian `c·exp(−π zᵀMz + wᵀz)`.
 */
typedef struct BgGaussian BgGaussian;

/**
 * Result of one experiment run.
 */
typedef struct BgRecord BgRecord;

/**
 * One output row. `lambda` is NaN outside the λ-sweep.
 */
typedef struct BgRow {
  size_t d;
  double r;
  double lambda;
  double value_re;
  double value_im;
  double limit_re;
  double limit_im;
  double abs_dev;
  double rel_dev;
  double tail_est;
  double seconds;
} BgRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after success.
 * Valid until the next call on the same thread.
 */
const char *bg_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *bg_version(void);

/**
 * Parse a TOML configuration.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum BgStatus bg_config_from_toml(const char *text, struct BgConfig **out);

/**
 * Load a TOML configuration file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum BgStatus bg_config_load(const char *path, struct BgConfig **out);

/**
 * Override the worker count; zero means the global pool.
 *
 * # Safety
 * `cfg` must come from `bg_config_*` and not be freed.
 */
enum BgStatus bg_config_set_threads(struct BgConfig *cfg, size_t threads);

/**
 * Turn wall-time recording on or off (off gives reproducible bytes).
 *
 * # Safety
 * `cfg` must come from `bg_config_*` and not be freed.
 */
enum BgStatus bg_config_set_timings(struct BgConfig *cfg, bool on);

/**
 * # Safety
 * `cfg` must come from `bg_config_*` or be null.
 */
void bg_config_free(struct BgConfig *cfg);

/**
 * Run the configured experiment.
 *
 * # Safety
 * `cfg` must be a live config and `out` a valid pointer.
 */
enum BgStatus bg_run_experiment(const struct BgConfig *cfg, struct BgRecord **out);

/**
 * # Safety
 * `rec` must be a live record.
 */
enum BgStatus bg_record_verdict(const struct BgRecord *rec, enum BgVerdict *out);

/**
 * # Safety
 * `rec` must be a live record.
 */
enum BgStatus bg_record_row_count(const struct BgRecord *rec, size_t *out);

/**
 * Copy row `index` into `out`.
 *
 * # Safety
 * `rec` must be a live record and `out` a valid pointer.
 */
enum BgStatus bg_record_row(const struct BgRecord *rec, size_t index, struct BgRow *out);

/**
 * CSV text of the record; release with `bg_string_free`.
 *
 * # Safety
 * `rec` must be a live record and `out` a valid pointer.
 */
enum BgStatus bg_record_csv(const struct BgRecord *rec, char **out);

/**
 * JSON-lines text of the record; release with `bg_string_free`.
 *
 * # Safety
 * `rec` must be a live record and `out` a valid pointer.
 */
enum BgStatus bg_record_json_lines(const struct BgRecord *rec, char **out);

/**
 * # Safety
 * `rec` must come from `bg_run_experiment` or be null.
 */
void bg_record_free(struct BgRecord *rec);

/**
 * # Safety
 * `s` must come from a `bg_record_*` text call or be null.
 */
void bg_string_free(char *s);

/**
 * Gaussian in `n` variables. `m` holds `n·n` complex entries (row-major,
 * interleaved re, im), `w` holds `n` interleaved complex entries.
 *
 * # Safety
 * `m` must point to `2n²` doubles, `w` to `2n`, and `out` be valid.
 */
enum BgStatus bg_gaussian_new(size_t n,
                              double c_re,
                              double c_im,
                              const double *m,
                              const double *w,
                              struct BgGaussian **out);

/**
 * `exp(−π‖z‖²)` in `n` variables, shifted to `center` when non-null.
 *
 * # Safety
 * `center` must be null or point to `n` doubles; `out` must be valid.
 */
enum BgStatus bg_gaussian_standard(size_t n, const double *center, struct BgGaussian **out);

/**
 * # Safety
 * `g` must be a live Gaussian and `z` point to `len` doubles.
 */
enum BgStatus bg_gaussian_eval(const struct BgGaussian *g,
                               const double *z,
                               size_t len,
                               double *re,
                               double *im);

/**
 * `∫ g` over the whole space.
 *
 * # Safety
 * `g` must be a live Gaussian.
 */
enum BgStatus bg_gaussian_integral(const struct BgGaussian *g, double *re, double *im);

/**
 * `∫ a · conj b` over phase space.
 *
 * # Safety
 * `a`, `b` must be live Gaussians.
 */
enum BgStatus bg_hs_pairing(const struct BgGaussian *a,
                            const struct BgGaussian *b,
                            double *re,
                            double *im);

/**
 * `Θ_f(τ, φ, ξ)` for a Gaussian `f` in `2d` variables; `xi` holds `2d`
 * doubles.
 *
 * # Safety
 * `f` must be a live Gaussian and `xi` point to `xi_len` doubles.
 */
enum BgStatus bg_theta_eval(const struct BgGaussian *f,
                            double tau_re,
                            double tau_im,
                            double phi,
                            const double *xi,
                            size_t xi_len,
                            double *re,
                            double *im);

/**
 * # Safety
 * `g` must come from `bg_gaussian_*` or be null.
 */
void bg_gaussian_free(struct BgGaussian *g);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BOLTZGRAD_H */
