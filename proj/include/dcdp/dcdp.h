/* SPDX-License-Identifier: Apache-2.0 */
/*
 * dcdp - decoupled data-consistency / diffusion-purification solver for
 * linear inverse problems with analytic score models.
 *
 * C interface of the shared library. All functions return DCDP_OK on
 * success; on failure they return an error code and leave a human-readable
 * message retrievable with dcdp_last_error() (thread-local). Handles are
 * opaque and must be released with the matching _destroy function.
 */
#ifndef DCDP_H
#define DCDP_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  ifdef DCDP_BUILD
#    define DCDP_API __declspec(dllexport)
#  else
#    define DCDP_API __declspec(dllimport)
#  endif
#else
#  define DCDP_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dcdp_status {
    DCDP_OK = 0,
    DCDP_ERR_INVALID_ARGUMENT = 1,
    DCDP_ERR_RUNTIME = 2,
    DCDP_ERR_IO = 3
} dcdp_status;

DCDP_API const char* dcdp_version(void);
DCDP_API const char* dcdp_last_error(void);

/* ------------------------------------------------------------------ */
/* noise schedule                                                      */
/* ------------------------------------------------------------------ */

typedef struct dcdp_schedule dcdp_schedule;

DCDP_API dcdp_status dcdp_schedule_create(int n_steps, double beta_min, double beta_max,
                                          dcdp_schedule** out);
DCDP_API void dcdp_schedule_destroy(dcdp_schedule* schedule);
DCDP_API int dcdp_schedule_steps(const dcdp_schedule* schedule);
/* t in 1..N */
DCDP_API dcdp_status dcdp_schedule_beta(const dcdp_schedule* schedule, int t, double* out);
/* t in 0..N */
DCDP_API dcdp_status dcdp_schedule_alpha_bar(const dcdp_schedule* schedule, int t, double* out);
/* Linearly decaying purification times; out_times must hold k values. */
DCDP_API dcdp_status dcdp_purification_times(int k, int t_start, int t_end, int* out_times);

/* ------------------------------------------------------------------ */
/* score models                                                        */
/* ------------------------------------------------------------------ */

typedef struct dcdp_score_model dcdp_score_model;

/* Diagonal GMM prior: weights[n_components], means and diag_vars stored
 * row-major as n_components x dim. The model keeps its own copy of the
 * schedule handle's contents. */
DCDP_API dcdp_status dcdp_score_model_gmm(const dcdp_schedule* schedule, const double* weights,
                                          const double* means, const double* diag_vars,
                                          int n_components, int dim, dcdp_score_model** out);
DCDP_API dcdp_status dcdp_score_model_gmm_file(const dcdp_schedule* schedule, const char* path,
                                               dcdp_score_model** out);
/* Kernel-density prior: one isotropic component of variance bandwidth^2 per
 * data point (row-major n_points x dim), uniform weights. */
DCDP_API dcdp_status dcdp_score_model_empirical(const dcdp_schedule* schedule, const double* data,
                                                int n_points, int dim, double bandwidth,
                                                dcdp_score_model** out);
DCDP_API void dcdp_score_model_destroy(dcdp_score_model* model);
DCDP_API int dcdp_score_model_dim(const dcdp_score_model* model);
DCDP_API dcdp_status dcdp_score_log_density(const dcdp_score_model* model, const double* x, int t,
                                            double* out);
DCDP_API dcdp_status dcdp_score_eval(const dcdp_score_model* model, const double* x, int t,
                                     double* out_score);
/* Row-major dim x dim Hessian of log density. */
DCDP_API dcdp_status dcdp_score_jacobian_eval(const dcdp_score_model* model, const double* x, int t,
                                              double* out_jacobian);

/* ------------------------------------------------------------------ */
/* linear operators and measurements                                   */
/* ------------------------------------------------------------------ */

typedef struct dcdp_operator dcdp_operator;

/* Spec strings, e.g. "downsample h=32 w=32 c=1 factor=4",
 * "inpaint h=32 w=32 c=1 top=10 left=10 bh=12 bw=12",
 * "gblur h=32 w=32 c=1 ksize=9 sigma=1.5",
 * "mblur h=32 w=32 c=1 ksize=9 length=7 angle_deg=45",
 * "identity h=32 w=32 c=1". */
DCDP_API dcdp_status dcdp_operator_parse(const char* spec, dcdp_operator** out);
DCDP_API void dcdp_operator_destroy(dcdp_operator* op);
DCDP_API int dcdp_operator_in_dim(const dcdp_operator* op);
DCDP_API int dcdp_operator_out_dim(const dcdp_operator* op);
DCDP_API dcdp_status dcdp_operator_apply(const dcdp_operator* op, const double* x, double* out_y);
DCDP_API dcdp_status dcdp_operator_adjoint(const dcdp_operator* op, const double* y, double* out_x);
/* Worst relative inner-product defect over `trials` random pairs. */
DCDP_API dcdp_status dcdp_operator_adjoint_check(const dcdp_operator* op, int trials, uint64_t seed,
                                                 double* out_max_rel_err);
/* y = A x + sigma_y * eps from the seeded stream; out_y holds out_dim values. */
DCDP_API dcdp_status dcdp_measure(const dcdp_operator* op, const double* x_star, double sigma_y,
                                  uint64_t seed, double* out_y);

/* ------------------------------------------------------------------ */
/* solvers                                                             */
/* ------------------------------------------------------------------ */

typedef enum dcdp_backend {
    DCDP_BACKEND_SDE = 0,
    DCDP_BACKEND_DDIM = 1,
    DCDP_BACKEND_TWEEDIE = 2,
    DCDP_BACKEND_FLOW_ODE = 3
} dcdp_backend;

typedef enum dcdp_latent_mode {
    DCDP_LATENT_NONE = 0,
    DCDP_LATENT_DC = 1, /* optimize the latent code through the decoder */
    DCDP_PIXEL_DC = 2   /* optimize pixels, then encode */
} dcdp_latent_mode;

typedef struct dcdp_solver_options {
    int outer_iterations; /* K */
    int tau;
    double learning_rate;
    double momentum;
    int backend;       /* dcdp_backend */
    int backend_steps; /* DDIM / flow-ODE sub-steps */
    int t_start;
    int t_end;
    uint64_t seed;
} dcdp_solver_options;

typedef struct dcdp_dps_options {
    int n_steps; /* 0 = full schedule */
    double eta;
    uint64_t seed;
} dcdp_dps_options;

typedef struct dcdp_result dcdp_result;

DCDP_API dcdp_status dcdp_solve(const dcdp_operator* op, const double* y,
                                const dcdp_score_model* model, const dcdp_solver_options* options,
                                dcdp_result** out);
DCDP_API dcdp_status dcdp_dps_solve(const dcdp_operator* op, const double* y,
                                    const dcdp_score_model* model, const dcdp_dps_options* options,
                                    dcdp_result** out);

DCDP_API void dcdp_result_destroy(dcdp_result* result);
DCDP_API int dcdp_result_dim(const dcdp_result* result);
DCDP_API dcdp_status dcdp_result_reconstruction(const dcdp_result* result, double* out);
DCDP_API int64_t dcdp_result_nfe_score(const dcdp_result* result);
DCDP_API int64_t dcdp_result_nfe_jacobian(const dcdp_result* result);
DCDP_API double dcdp_result_wall_time(const dcdp_result* result);
DCDP_API int dcdp_result_iterations(const dcdp_result* result);

/* ------------------------------------------------------------------ */
/* latent codec                                                        */
/* ------------------------------------------------------------------ */

typedef struct dcdp_codec dcdp_codec;

/* Top-r principal directions of the dataset (row-major n_points x dim). */
DCDP_API dcdp_status dcdp_codec_pca(const double* data, int n_points, int dim, int latent_dim,
                                    dcdp_codec** out);
DCDP_API void dcdp_codec_destroy(dcdp_codec* codec);
DCDP_API int dcdp_codec_latent_dim(const dcdp_codec* codec);
DCDP_API int dcdp_codec_pixel_dim(const dcdp_codec* codec);
DCDP_API dcdp_status dcdp_codec_encode(const dcdp_codec* codec, const double* x, double* out_z);
DCDP_API dcdp_status dcdp_codec_decode(const dcdp_codec* codec, const double* z, double* out_x);

/* Latent solve; the score model must live in the codec's latent space and
 * mode must be DCDP_LATENT_DC or DCDP_PIXEL_DC. */
DCDP_API dcdp_status dcdp_solve_latent(const dcdp_operator* op, const double* y,
                                       const dcdp_score_model* latent_model,
                                       const dcdp_codec* codec, const dcdp_solver_options* options,
                                       int mode, dcdp_result** out);

/* ------------------------------------------------------------------ */
/* metrics                                                             */
/* ------------------------------------------------------------------ */

DCDP_API dcdp_status dcdp_psnr(const double* x, const double* ref, int n, double peak, double* out);
DCDP_API dcdp_status dcdp_ssim(const double* x, const double* ref, int height, int width,
                               int channels, double peak, double* out);

/* ------------------------------------------------------------------ */
/* experiment runner                                                   */
/* ------------------------------------------------------------------ */

/* Runs the grid described by the config file; writes results.csv, traces and
 * dumps under the output directory. Pass NULL / 0 to keep config values.
 * out_failed_cells (optional) receives the number of failed cells. */
DCDP_API dcdp_status dcdp_run_experiment(const char* config_path, const char* output_dir,
                                         int jobs, uint64_t master_seed, int use_master_seed,
                                         int* out_failed_cells);

/* Aggregates a results.csv; returns a malloc'd text table (free with
 * dcdp_string_free). When csv_out is non-NULL the aggregation is also
 * written there as CSV. */
DCDP_API dcdp_status dcdp_emit_table(const char* results_csv, const char* csv_out, char** out_text);
DCDP_API void dcdp_string_free(char* s);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* DCDP_H */
