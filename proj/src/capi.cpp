// SPDX-License-Identifier: Apache-2.0
#include "dcdp/dcdp.h"

#include "core/experiment.hpp"
#include "core/latent.hpp"
#include "core/metrics.hpp"
#include "core/operators.hpp"
#include "core/schedule.hpp"
#include "core/score.hpp"
#include "core/solver.hpp"

#include <cstring>
#include <memory>
#include <string>

namespace {

thread_local std::string g_last_error;

dcdp_status fail(dcdp_status code, const char* what) {
    g_last_error = what;
    return code;
}

// Exceptions from the core map onto the coarse C status codes.
template <typename Fn>
dcdp_status guarded(Fn&& fn) {
    try {
        fn();
        return DCDP_OK;
    } catch (const std::invalid_argument& e) {
        return fail(DCDP_ERR_INVALID_ARGUMENT, e.what());
    } catch (const std::out_of_range& e) {
        return fail(DCDP_ERR_INVALID_ARGUMENT, e.what());
    } catch (const dcdp::ConfigError& e) {
        return fail(DCDP_ERR_INVALID_ARGUMENT, e.what());
    } catch (const std::exception& e) {
        return fail(DCDP_ERR_RUNTIME, e.what());
    } catch (...) {
        return fail(DCDP_ERR_RUNTIME, "unknown error");
    }
}

dcdp::Vec to_vec(const double* data, int n) {
    return Eigen::Map<const dcdp::Vec>(data, n);
}

} // namespace

struct dcdp_schedule {
    std::shared_ptr<const dcdp::NoiseSchedule> impl;
};

struct dcdp_score_model {
    std::shared_ptr<const dcdp::GmmScoreModel> impl;
};

struct dcdp_operator {
    std::unique_ptr<dcdp::LinearOperator> impl;
};

struct dcdp_codec {
    std::unique_ptr<dcdp::LinearCodec> impl;
};

struct dcdp_result {
    dcdp::SolveResult impl;
};

extern "C" {

const char* dcdp_version(void) { return "0.1.0"; }

const char* dcdp_last_error(void) { return g_last_error.c_str(); }

/* schedule ---------------------------------------------------------- */

dcdp_status dcdp_schedule_create(int n_steps, double beta_min, double beta_max,
                                 dcdp_schedule** out) {
    if (!out) return fail(DCDP_ERR_INVALID_ARGUMENT, "null output pointer");
    return guarded([&] {
        *out = new dcdp_schedule{std::make_shared<const dcdp::NoiseSchedule>(
            dcdp::NoiseSchedule::vp_linear(n_steps, beta_min, beta_max))};
    });
}

void dcdp_schedule_destroy(dcdp_schedule* schedule) { delete schedule; }

int dcdp_schedule_steps(const dcdp_schedule* schedule) {
    return schedule ? schedule->impl->steps() : 0;
}

dcdp_status dcdp_schedule_beta(const dcdp_schedule* schedule, int t, double* out) {
    if (!schedule || !out) return fail(DCDP_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&] { *out = schedule->impl->beta(t); });
}

dcdp_status dcdp_schedule_alpha_bar(const dcdp_schedule* schedule, int t, double* out) {
    if (!schedule || !out) return fail(DCDP_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&] { *out = schedule->impl->alpha_bar(t); });
}

dcdp_status dcdp_purification_times(int k, int t_start, int t_end, int* out_times) {
    if (!out_times) return fail(DCDP_ERR_INVALID_ARGUMENT, "null output pointer");
    return guarded([&] {
        auto times = dcdp::purification_times(k, t_start, t_end);
        std::memcpy(out_times, times.data(), times.size() * sizeof(int));
    });
}

/* score models ------------------------------------------------------ */

dcdp_status dcdp_score_model_gmm(const dcdp_schedule* schedule, const double* weights,
                                 const double* means, const double* diag_vars, int n_components,
                                 int dim, dcdp_score_model** out) {
    if (!schedule || !weights || !means || !diag_vars || !out)
        return fail(DCDP_ERR_INVALID_ARGUMENT, "null argument");
    if (n_components < 1 || dim < 1)
        return fail(DCDP_ERR_INVALID_ARGUMENT, "n_components and dim must be positive");
    return guarded([&] {
        dcdp::Vec w = to_vec(weights, n_components);
        std::vector<dcdp::Vec> mu(n_components), var(n_components);
        for (int i = 0; i < n_components; ++i) {
            mu[i] = to_vec(means + std::ptrdiff_t(i) * dim, dim);
            var[i] = to_vec(diag_vars + std::ptrdiff_t(i) * dim, dim);
        }
        auto gmm = dcdp::GaussianMixture::diagonal(w, std::move(mu), std::move(var));
        *out = new dcdp_score_model{
            std::make_shared<const dcdp::GmmScoreModel>(std::move(gmm), schedule->impl)};
    });
}

dcdp_status dcdp_score_model_gmm_file(const dcdp_schedule* schedule, const char* path,
                                      dcdp_score_model** out) {
    if (!schedule || !path || !out) return fail(DCDP_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&] {
        *out = new dcdp_score_model{
            std::make_shared<const dcdp::GmmScoreModel>(dcdp::load_gmm(path), schedule->impl)};
    });
}

dcdp_status dcdp_score_model_empirical(const dcdp_schedule* schedule, const double* data,
                                       int n_points, int dim, double bandwidth,
                                       dcdp_score_model** out) {
    if (!schedule || !data || !out) return fail(DCDP_ERR_INVALID_ARGUMENT, "null argument");
    if (n_points < 1 || dim < 1)
        return fail(DCDP_ERR_INVALID_ARGUMENT, "n_points and dim must be positive");
    return guarded([&] {
        std::vector<dcdp::Vec> points(n_points);
        for (int i = 0; i < n_points; ++i) points[i] = to_vec(data + std::ptrdiff_t(i) * dim, dim);
        *out = new dcdp_score_model{std::make_shared<const dcdp::GmmScoreModel>(
            dcdp::empirical_prior(points, bandwidth), schedule->impl)};
    });
}

void dcdp_score_model_destroy(dcdp_score_model* model) { delete model; }

int dcdp_score_model_dim(const dcdp_score_model* model) { return model ? model->impl->dim() : 0; }

dcdp_status dcdp_score_log_density(const dcdp_score_model* model, const double* x, int t,
                                   double* out) {
    if (!model || !x || !out) return fail(DCDP_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&] { *out = model->impl->log_density(to_vec(x, model->impl->dim()), t); });
}

dcdp_status dcdp_score_eval(const dcdp_score_model* model, const double* x, int t,
                            double* out_score) {
    if (!model || !x || !out_score) return fail(DCDP_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&] {
        dcdp::Vec s = model->impl->score(to_vec(x, model->impl->dim()), t);
        std::memcpy(out_score, s.data(), std::size_t(s.size()) * sizeof(double));
    });
}

dcdp_status dcdp_score_jacobian_eval(const dcdp_score_model* model, const double* x, int t,
                                     double* out_jacobian) {
    if (!model || !x || !out_jacobian) return fail(DCDP_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&] {
        const int d = model->impl->dim();
        dcdp::Mat h = model->impl->score_jacobian(to_vec(x, d), t);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) out_jacobian[std::ptrdiff_t(i) * d + j] = h(i, j);
    });
}

/* operators ---------------------------------------------------------- */

dcdp_status dcdp_operator_parse(const char* spec, dcdp_operator** out) {
    if (!spec || !out) return fail(DCDP_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&] { *out = new dcdp_operator{dcdp::parse_operator(spec)}; });
}

void dcdp_operator_destroy(dcdp_operator* op) { delete op; }

int dcdp_operator_in_dim(const dcdp_operator* op) {
    return op ? op->impl->in_shape().size() : 0;
}

int dcdp_operator_out_dim(const dcdp_operator* op) {
    return op ? op->impl->out_shape().size() : 0;
}

dcdp_status dcdp_operator_apply(const dcdp_operator* op, const double* x, double* out_y) {
    if (!op || !x || !out_y) return fail(DCDP_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&] {
        dcdp::Vec y = op->impl->apply(to_vec(x, op->impl->in_shape().size()));
        std::memcpy(out_y, y.data(), std::size_t(y.size()) * sizeof(double));
    });
}

dcdp_status dcdp_operator_adjoint(const dcdp_operator* op, const double* y, double* out_x) {
    if (!op || !y || !out_x) return fail(DCDP_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&] {
        dcdp::Vec x = op->impl->adjoint(to_vec(y, op->impl->out_shape().size()));
        std::memcpy(out_x, x.data(), std::size_t(x.size()) * sizeof(double));
    });
}

dcdp_status dcdp_operator_adjoint_check(const dcdp_operator* op, int trials, uint64_t seed,
                                        double* out_max_rel_err) {
    if (!op || !out_max_rel_err) return fail(DCDP_ERR_INVALID_ARGUMENT, "null argument");
    if (trials < 1) return fail(DCDP_ERR_INVALID_ARGUMENT, "trials must be positive");
    return guarded([&] { *out_max_rel_err = dcdp::adjoint_check(*op->impl, trials, seed); });
}

dcdp_status dcdp_measure(const dcdp_operator* op, const double* x_star, double sigma_y,
                         uint64_t seed, double* out_y) {
    if (!op || !x_star || !out_y) return fail(DCDP_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&] {
        auto m = dcdp::measure(*op->impl, to_vec(x_star, op->impl->in_shape().size()), sigma_y, seed);
        std::memcpy(out_y, m.y.data(), std::size_t(m.y.size()) * sizeof(double));
    });
}

/* solvers ------------------------------------------------------------ */

namespace {

dcdp::SolverConfig to_solver_config(const dcdp_solver_options& o) {
    dcdp::SolverConfig cfg;
    cfg.outer_iterations = o.outer_iterations;
    cfg.fidelity.tau = o.tau;
    cfg.fidelity.learning_rate = o.learning_rate;
    cfg.fidelity.momentum = o.momentum;
    switch (o.backend) {
        case DCDP_BACKEND_SDE: cfg.backend = dcdp::PurifyBackend::ancestral(); break;
        case DCDP_BACKEND_DDIM: cfg.backend = dcdp::PurifyBackend::ddim(o.backend_steps); break;
        case DCDP_BACKEND_TWEEDIE: cfg.backend = dcdp::PurifyBackend::tweedie(); break;
        case DCDP_BACKEND_FLOW_ODE: cfg.backend = dcdp::PurifyBackend::flow_ode(o.backend_steps); break;
        default: throw std::invalid_argument("unknown backend code");
    }
    cfg.purify_times = dcdp::purification_times(o.outer_iterations, o.t_start, o.t_end);
    cfg.seed = o.seed;
    cfg.record_iterates = false;
    return cfg;
}

} // namespace

dcdp_status dcdp_solve(const dcdp_operator* op, const double* y, const dcdp_score_model* model,
                       const dcdp_solver_options* options, dcdp_result** out) {
    if (!op || !y || !model || !options || !out)
        return fail(DCDP_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&] {
        dcdp::Measurement m;
        m.y = to_vec(y, op->impl->out_shape().size());
        auto cfg = to_solver_config(*options);
        *out = new dcdp_result{
            dcdp::dcdp_solve(*op->impl, m, *model->impl, model->impl->schedule(), cfg)};
    });
}

dcdp_status dcdp_dps_solve(const dcdp_operator* op, const double* y, const dcdp_score_model* model,
                           const dcdp_dps_options* options, dcdp_result** out) {
    if (!op || !y || !model || !options || !out)
        return fail(DCDP_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&] {
        dcdp::Measurement m;
        m.y = to_vec(y, op->impl->out_shape().size());
        dcdp::DpsConfig cfg;
        cfg.n_steps = options->n_steps;
        cfg.eta = options->eta;
        cfg.seed = options->seed;
        *out = new dcdp_result{
            dcdp::dps_solve(*op->impl, m, *model->impl, model->impl->schedule(), cfg)};
    });
}

void dcdp_result_destroy(dcdp_result* result) { delete result; }

int dcdp_result_dim(const dcdp_result* result) {
    return result ? int(result->impl.reconstruction.size()) : 0;
}

dcdp_status dcdp_result_reconstruction(const dcdp_result* result, double* out) {
    if (!result || !out) return fail(DCDP_ERR_INVALID_ARGUMENT, "null argument");
    std::memcpy(out, result->impl.reconstruction.data(),
                std::size_t(result->impl.reconstruction.size()) * sizeof(double));
    return DCDP_OK;
}

int64_t dcdp_result_nfe_score(const dcdp_result* result) {
    return result ? result->impl.nfe.score : 0;
}

int64_t dcdp_result_nfe_jacobian(const dcdp_result* result) {
    return result ? result->impl.nfe.jacobian : 0;
}

double dcdp_result_wall_time(const dcdp_result* result) {
    return result ? result->impl.wall_time : 0.0;
}

int dcdp_result_iterations(const dcdp_result* result) {
    return result ? int(result->impl.trace.size()) : 0;
}

/* codec --------------------------------------------------------------- */

dcdp_status dcdp_codec_pca(const double* data, int n_points, int dim, int latent_dim,
                           dcdp_codec** out) {
    if (!data || !out) return fail(DCDP_ERR_INVALID_ARGUMENT, "null argument");
    if (n_points < 1 || dim < 1)
        return fail(DCDP_ERR_INVALID_ARGUMENT, "n_points and dim must be positive");
    return guarded([&] {
        std::vector<dcdp::Vec> points(n_points);
        for (int i = 0; i < n_points; ++i) points[i] = to_vec(data + std::ptrdiff_t(i) * dim, dim);
        *out = new dcdp_codec{
            std::make_unique<dcdp::LinearCodec>(dcdp::LinearCodec::pca(points, latent_dim))};
    });
}

void dcdp_codec_destroy(dcdp_codec* codec) { delete codec; }

int dcdp_codec_latent_dim(const dcdp_codec* codec) {
    return codec ? codec->impl->latent_dim() : 0;
}

int dcdp_codec_pixel_dim(const dcdp_codec* codec) {
    return codec ? codec->impl->pixel_dim() : 0;
}

dcdp_status dcdp_codec_encode(const dcdp_codec* codec, const double* x, double* out_z) {
    if (!codec || !x || !out_z) return fail(DCDP_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&] {
        dcdp::Vec z = codec->impl->encode(to_vec(x, codec->impl->pixel_dim()));
        std::memcpy(out_z, z.data(), std::size_t(z.size()) * sizeof(double));
    });
}

dcdp_status dcdp_codec_decode(const dcdp_codec* codec, const double* z, double* out_x) {
    if (!codec || !z || !out_x) return fail(DCDP_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&] {
        dcdp::Vec x = codec->impl->decode(to_vec(z, codec->impl->latent_dim()));
        std::memcpy(out_x, x.data(), std::size_t(x.size()) * sizeof(double));
    });
}

dcdp_status dcdp_solve_latent(const dcdp_operator* op, const double* y,
                              const dcdp_score_model* latent_model, const dcdp_codec* codec,
                              const dcdp_solver_options* options, int mode, dcdp_result** out) {
    if (!op || !y || !latent_model || !codec || !options || !out)
        return fail(DCDP_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&] {
        dcdp::Measurement m;
        m.y = to_vec(y, op->impl->out_shape().size());
        auto cfg = to_solver_config(*options);
        if (mode == DCDP_LATENT_DC)
            cfg.latent_approach = dcdp::LatentApproach::LatentDC;
        else if (mode == DCDP_PIXEL_DC)
            cfg.latent_approach = dcdp::LatentApproach::PixelDC;
        else
            throw std::invalid_argument("mode must be DCDP_LATENT_DC or DCDP_PIXEL_DC");
        *out = new dcdp_result{dcdp::dcdp_solve_latent(*op->impl, m, *latent_model->impl,
                                                       latent_model->impl->schedule(),
                                                       *codec->impl, cfg)};
    });
}

/* metrics -------------------------------------------------------------- */

dcdp_status dcdp_psnr(const double* x, const double* ref, int n, double peak, double* out) {
    if (!x || !ref || !out) return fail(DCDP_ERR_INVALID_ARGUMENT, "null argument");
    if (n < 1) return fail(DCDP_ERR_INVALID_ARGUMENT, "n must be positive");
    return guarded([&] { *out = dcdp::psnr(to_vec(x, n), to_vec(ref, n), peak); });
}

dcdp_status dcdp_ssim(const double* x, const double* ref, int height, int width, int channels,
                      double peak, double* out) {
    if (!x || !ref || !out) return fail(DCDP_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&] {
        dcdp::ImageShape shape{height, width, channels};
        dcdp::SsimOptions opt;
        opt.peak = peak;
        *out = dcdp::ssim(to_vec(x, shape.size()), to_vec(ref, shape.size()), shape, opt);
    });
}

/* experiment ------------------------------------------------------------ */

dcdp_status dcdp_run_experiment(const char* config_path, const char* output_dir, int jobs,
                                uint64_t master_seed, int use_master_seed, int* out_failed_cells) {
    if (!config_path) return fail(DCDP_ERR_INVALID_ARGUMENT, "null config path");
    return guarded([&] {
        auto cfg = dcdp::ExperimentConfig::parse(config_path);
        dcdp::RunOverrides ov;
        if (output_dir) ov.output_dir = std::string(output_dir);
        if (jobs > 0) ov.jobs = jobs;
        if (use_master_seed) ov.master_seed = master_seed;
        int failed = dcdp::run_experiment(cfg, ov);
        if (out_failed_cells) *out_failed_cells = failed;
    });
}

dcdp_status dcdp_emit_table(const char* results_csv, const char* csv_out, char** out_text) {
    if (!results_csv || !out_text) return fail(DCDP_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&] {
        std::string table = dcdp::emit_table(results_csv, csv_out ? csv_out : "");
        char* buf = static_cast<char*>(std::malloc(table.size() + 1));
        if (!buf) throw std::runtime_error("out of memory");
        std::memcpy(buf, table.c_str(), table.size() + 1);
        *out_text = buf;
    });
}

void dcdp_string_free(char* s) { std::free(s); }

} // extern "C"
