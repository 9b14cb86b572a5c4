// SPDX-License-Identifier: Apache-2.0
#include "solver.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>
#include <string>

namespace dcdp {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

void validate_dcdp_config(const SolverConfig& cfg, const NoiseSchedule& schedule) {
    if (cfg.outer_iterations < 1)
        throw std::invalid_argument("SolverConfig: outer_iterations must be >= 1");
    if (int(cfg.purify_times.size()) != cfg.outer_iterations)
        throw std::invalid_argument("SolverConfig: purify_times length must equal outer_iterations");
    int prev = schedule.steps();
    for (int t : cfg.purify_times) {
        if (t < 0 || t > schedule.steps())
            throw std::invalid_argument("SolverConfig: purification time outside 0..N");
        if (t > prev)
            throw std::invalid_argument("SolverConfig: purification times must be non-increasing");
        prev = t;
    }
}

double record_error(const Vec* reference, const Vec& v) {
    return reference ? mean_squared_error(v, *reference) : -1.0;
}

} // namespace

SolveResult dcdp_solve(const LinearOperator& op, const Measurement& y, const ScoreModel& model,
                       const NoiseSchedule& schedule, const SolverConfig& cfg,
                       const Vec* reference) {
    if (cfg.latent_approach != LatentApproach::None)
        throw std::invalid_argument("dcdp_solve: latent approaches go through dcdp_solve_latent");
    if (model.dim() != op.in_shape().size())
        throw std::invalid_argument("dcdp_solve: score model dimension does not match operator");
    validate_dcdp_config(cfg, schedule);

    auto start = Clock::now();
    SolveResult result;
    Vec v = Vec::Zero(op.in_shape().size()); // v_0 = 0
    for (int k = 1; k <= cfg.outer_iterations; ++k) {
        IterationRecord rec;
        rec.k = k;
        rec.t_level = cfg.purify_times[k - 1];
        try {
            Vec x = data_fidelity(op, y.y, v, cfg.fidelity, &rec.fidelity_trace);
            v = dpur(x, rec.t_level, cfg.backend, model, schedule,
                     mix_seed(cfg.seed, std::uint64_t(k)), &result.nfe);
            if (cfg.record_iterates) {
                rec.x_k = std::move(x);
                rec.v_k = v;
            }
        } catch (const std::exception& e) {
            throw std::runtime_error("dcdp_solve: outer iteration " + std::to_string(k) + ": " + e.what());
        }
        rec.fidelity_loss_final = rec.fidelity_trace.empty() ? 0.0 : rec.fidelity_trace.back();
        rec.error_vs_reference = record_error(reference, v);
        rec.nfe_cumulative = result.nfe.score;
        result.trace.push_back(std::move(rec));
    }
    result.reconstruction = std::move(v);
    result.wall_time = seconds_since(start);
    return result;
}

SolveResult dcdp_solve_latent(const LinearOperator& op, const Measurement& y,
                              const ScoreModel& latent_model, const NoiseSchedule& schedule,
                              const LinearCodec& codec, const SolverConfig& cfg,
                              const Vec* reference) {
    if (cfg.latent_approach == LatentApproach::None)
        throw std::invalid_argument("dcdp_solve_latent: pick LatentDC or PixelDC");
    if (latent_model.dim() != codec.latent_dim())
        throw std::invalid_argument("dcdp_solve_latent: score model must live in latent space");
    if (codec.pixel_dim() != op.in_shape().size())
        throw std::invalid_argument("dcdp_solve_latent: codec pixel dim does not match operator");
    validate_dcdp_config(cfg, schedule);

    auto start = Clock::now();
    SolveResult result;
    Vec vhat;
    if (cfg.latent_approach == LatentApproach::LatentDC) {
        Rng init_rng(mix_seed(cfg.seed, 0));
        vhat = init_rng.normal_vec(codec.latent_dim()); // vhat_0 ~ N(0, I)
    } else {
        vhat = Vec::Zero(codec.latent_dim()); // decode(vhat_0) = 0
    }

    for (int k = 1; k <= cfg.outer_iterations; ++k) {
        IterationRecord rec;
        rec.k = k;
        rec.t_level = cfg.purify_times[k - 1];
        try {
            Vec z;
            if (cfg.latent_approach == LatentApproach::LatentDC) {
                z = data_fidelity_latent(op, y.y, vhat, codec, cfg.fidelity, &rec.fidelity_trace);
                z = re_encode(z, codec);
            } else {
                Vec x = data_fidelity(op, y.y, codec.decode(vhat), cfg.fidelity, &rec.fidelity_trace);
                z = codec.encode(x);
            }
            vhat = dpur(z, rec.t_level, cfg.backend, latent_model, schedule,
                        mix_seed(cfg.seed, std::uint64_t(k)), &result.nfe);
            if (cfg.record_iterates) {
                rec.x_k = codec.decode(z);
                rec.v_k = codec.decode(vhat);
            }
        } catch (const std::exception& e) {
            throw std::runtime_error("dcdp_solve_latent: outer iteration " + std::to_string(k) + ": " +
                                     e.what());
        }
        rec.fidelity_loss_final = rec.fidelity_trace.empty() ? 0.0 : rec.fidelity_trace.back();
        rec.error_vs_reference = reference ? mean_squared_error(codec.decode(vhat), *reference) : -1.0;
        rec.nfe_cumulative = result.nfe.score;
        result.trace.push_back(std::move(rec));
    }
    result.reconstruction = codec.decode(vhat);
    result.wall_time = seconds_since(start);
    return result;
}

Vec dps_likelihood_gradient(const LinearOperator& op, const Vec& y, const ScoreModel& model,
                            const NoiseSchedule& schedule, const Vec& x, int t,
                            const Vec* precomputed_score, EvalCounter* counter) {
    const double ab = schedule.alpha_bar(t);
    Vec s;
    if (precomputed_score) {
        s = *precomputed_score;
    } else {
        s = model.score(x, t);
        if (counter) ++counter->score;
    }
    Vec x0_hat = (x + (1.0 - ab) * s) / std::sqrt(ab);
    Mat hess = model.score_jacobian(x, t);
    if (counter) ++counter->jacobian;
    // Jacobian of x0_hat is (I + (1 - ab) H) / sqrt(ab); H symmetric
    Vec q = op.adjoint(op.apply(x0_hat) - y);
    return (2.0 / std::sqrt(ab)) * (q + (1.0 - ab) * (hess * q));
}

SolveResult dps_solve(const LinearOperator& op, const Measurement& y, const ScoreModel& model,
                      const NoiseSchedule& schedule, const DpsConfig& cfg,
                      const Vec* reference) {
    if (model.dim() != op.in_shape().size())
        throw std::invalid_argument("dps_solve: score model dimension does not match operator");
    const int n_steps = cfg.n_steps > 0 ? cfg.n_steps : schedule.steps();
    if (n_steps > schedule.steps())
        throw std::invalid_argument("dps_solve: n_steps exceeds schedule length");
    if (cfg.eta < 0.0) throw std::invalid_argument("dps_solve: eta must be nonnegative");

    auto start = Clock::now();
    SolveResult result;
    Rng rng(cfg.seed);
    Vec x = rng.normal_vec(op.in_shape().size()); // start from pure noise

    for (int t = n_steps; t >= 1; --t) {
        const double beta = schedule.beta(t);
        Vec s = model.score(x, t);
        ++result.nfe.score;

        // unconditional ancestral update (no noise on the final step)
        Vec x_unc = (x + beta * s) / std::sqrt(1.0 - beta);
        if (t > 1) x_unc += std::sqrt(beta) * rng.normal_vec(x.size());

        Vec grad = dps_likelihood_gradient(op, y.y, model, schedule, x, t, &s, &result.nfe);
        Vec x_next = x_unc - cfg.eta * grad;
        if (!x_next.allFinite() || x_next.cwiseAbs().maxCoeff() > cfg.divergence_guard)
            throw std::runtime_error("dps_solve: diverged at reverse step t=" + std::to_string(t) +
                                     " (|x|_inf guard " + std::to_string(cfg.divergence_guard) + ")");

        IterationRecord rec;
        rec.k = n_steps - t + 1;
        rec.t_level = t;
        if (cfg.record_iterates) {
            rec.x_k = x_unc;
            rec.v_k = x_next;
        }
        rec.error_vs_reference = record_error(reference, x_next);
        rec.nfe_cumulative = result.nfe.score;
        result.trace.push_back(std::move(rec));
        x = std::move(x_next);
    }
    result.reconstruction = std::move(x);
    result.wall_time = seconds_since(start);
    return result;
}

} // namespace dcdp
