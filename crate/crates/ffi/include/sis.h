#ifndef SIS_H
#define SIS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SisScheme {
  SIS_SCHEME_EM_STATE = 0,
  SIS_SCHEME_EM_LOG = 1,
  SIS_SCHEME_MILSTEIN = 2,
} SisScheme;

typedef enum SisStatus {
  SIS_STATUS_OK = 0,
  SIS_STATUS_NULL_POINTER = 1,
  SIS_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Too many steps were clamped to the domain.
   */
  SIS_STATUS_UNRELIABLE = 3,
  SIS_STATUS_NOT_APPLICABLE = 4,
  SIS_STATUS_OUT_OF_RANGE = 5,
  SIS_STATUS_IO = 6,
  SIS_STATUS_PANIC = 7,
} SisStatus;

typedef enum SisTheoremCase {
  SIS_THEOREM_CASE_ONE = 1,
  SIS_THEOREM_CASE_TWO = 2,
} SisTheoremCase;

/**
 * An aggregated ensemble report.
 */
typedef struct SisEnsemble SisEnsemble;

/**
 * Validated model parameters.
 */
typedef struct SisModel SisModel;

/**
 * One simulated path.
 */
typedef struct SisPath SisPath;

/**
 * `extinction_eps < 0` selects the default threshold; `record_stride == 0`
 * selects the automatic stride.
 */
typedef struct SisSchemeConfig {
  enum SisScheme scheme;
  double dt;
  double t_end;
  double clamp_eps;
  double extinction_eps;
  uint64_t record_stride;
} SisSchemeConfig;

typedef struct SisParams {
  double beta;
  double gamma;
  double mu;
  double sigma;
  double capacity;
  double i0;
} SisParams;

typedef struct SisRegime {
  double r0s;
  enum SisTheoremCase theorem_case;
  double rate_bound;
  double average_bound;
  bool low_noise_extinction;
  bool high_noise_extinction;
  bool conjecture_region;
  bool persistence;
  bool deterministic;
  bool critical;
} SisRegime;

typedef struct SisSample {
  double t;
  double i;
  double log_i;
  double sum_i;
  double sum_i2;
  double mart_state;
  double mart_log;
} SisSample;

/**
 * `slope_regression` is NaN when the path is too short to fit.
 */
typedef struct SisPathSummary {
  bool extinct;
  double t_stop;
  uint64_t steps;
  uint64_t clamp_count;
  double slope_endpoint;
  double slope_regression;
  double avg_i;
  double avg_i2;
  double psi;
  double min_hoelder_margin;
  double max_state_residual;
  double max_log_residual;
} SisPathSummary;

typedef struct SisEnsembleSummary {
  uint64_t n_paths;
  double extinct_fraction;
  double slope_mean;
  double slope_stderr;
  double slope_q05;
  double slope_q25;
  double slope_q50;
  double slope_q75;
  double slope_q95;
  double avg_i_mean;
  double mart_mean;
  double mart_stderr;
  double max_identity_residual;
  double max_log_identity_residual;
  double max_decomposition_gap;
  double min_hoelder_margin;
  uint64_t unreliable_paths;
} SisEnsembleSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Description of the last failure on this thread; empty after a success.
 */
const char *sis_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *sis_version(void);

/**
 * Default scheme settings: log scheme, `dt = 1e-3`, default thresholds.
 */
struct SisSchemeConfig sis_scheme_config_default(double t_end);

enum SisStatus sis_model_new(const struct SisParams *params, struct SisModel **out);

void sis_model_free(struct SisModel *model);

enum SisStatus sis_model_params(const struct SisModel *model, struct SisParams *out);

enum SisStatus sis_model_classify(const struct SisModel *model, struct SisRegime *out);

/**
 * `(βN − μ − γ) i − β i²`.
 */
enum SisStatus sis_model_drift(const struct SisModel *model, double i, double *out);

/**
 * `σ (N − i) i`.
 */
enum SisStatus sis_model_diffusion(const struct SisModel *model, double i, double *out);

/**
 * Drift of `log I` at level `i`.
 */
enum SisStatus sis_model_log_drift(const struct SisModel *model, double i, double *out);

/**
 * Noise-free logistic solution at time `t`; requires `sigma == 0`.
 */
enum SisStatus sis_logistic_reference(const struct SisModel *model, double t, double *out);

/**
 * Simulate path `stream` of the ensemble keyed by `seed`.
 */
enum SisStatus sis_path_simulate(const struct SisModel *model,
                                 const struct SisSchemeConfig *config,
                                 uint64_t seed,
                                 uint64_t stream,
                                 struct SisPath **out);

void sis_path_free(struct SisPath *path);

enum SisStatus sis_path_sample_count(const struct SisPath *path, size_t *out);

enum SisStatus sis_path_sample(const struct SisPath *path, size_t index, struct SisSample *out);

enum SisStatus sis_path_summary(const struct SisPath *path, struct SisPathSummary *out);

/**
 * Run `n_paths` paths on at most `max_workers` threads (0 means all cores).
 * The report does not depend on `max_workers`.
 */
enum SisStatus sis_ensemble_run(const struct SisModel *model,
                                const struct SisSchemeConfig *config,
                                uint64_t n_paths,
                                uint64_t seed,
                                size_t max_workers,
                                struct SisEnsemble **out);

void sis_ensemble_free(struct SisEnsemble *ensemble);

enum SisStatus sis_ensemble_summary(const struct SisEnsemble *ensemble,
                                    struct SisEnsembleSummary *out);

/**
 * Per-path endpoint slope, in path order.
 */
enum SisStatus sis_ensemble_path_slope(const struct SisEnsemble *ensemble,
                                       size_t index,
                                       double *out);

/**
 * Full report as JSON. Release the string with [`sis_string_free`].
 */
enum SisStatus sis_ensemble_to_json(const struct SisEnsemble *ensemble, char **out);

void sis_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SIS_H */
