// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "fidelity.hpp"
#include "latent.hpp"
#include "metrics.hpp"
#include "purify.hpp"

#include <vector>

namespace dcdp {

enum class LatentApproach { None, LatentDC, PixelDC };

struct SolverConfig {
    int outer_iterations = 10; // K
    FidelityConfig fidelity;
    PurifyBackend backend = PurifyBackend::ddim(20);
    std::vector<int> purify_times; // length K, monotone non-increasing
    std::uint64_t seed = 0;
    LatentApproach latent_approach = LatentApproach::None;
    bool record_iterates = true; // keep x_k / v_k vectors in the trace
};

struct DpsConfig {
    int n_steps = 0;   // reverse steps; 0 means the schedule's full N
    double eta = 0.1;  // likelihood step size
    std::uint64_t seed = 0;
    double divergence_guard = 1e6; // abort when |x|_inf exceeds this
    bool record_iterates = false;
};

struct IterationRecord {
    int k = 0;        // outer iteration (1-based); reverse step index for DPS
    int t_level = 0;  // T_k (DCDP) or t (DPS)
    Vec x_k;          // data-consistent iterate (empty unless record_iterates)
    Vec v_k;          // purified iterate (empty unless record_iterates)
    std::vector<double> fidelity_trace; // per-inner-step loss, initial value first
    double fidelity_loss_final = 0.0;
    double error_vs_reference = -1.0;   // MSE of v_k vs reference; -1 if none given
    long long nfe_cumulative = 0;       // score evals consumed up to and including this iteration
};

struct SolveResult {
    Vec reconstruction;
    std::vector<IterationRecord> trace;
    EvalCounter nfe;
    double wall_time = 0.0; // seconds, solve loop only
};

// Alternates tau-step data fidelity and diffusion purification for K outer
// iterations starting from v_0 = 0; returns v_K. Deterministic per seed.
SolveResult dcdp_solve(const LinearOperator& op, const Measurement& y, const ScoreModel& model,
                       const NoiseSchedule& schedule, const SolverConfig& cfg,
                       const Vec* reference = nullptr);

// Latent variants over a linear codec. LatentDC optimizes the latent code
// through the decoder and re-encodes; PixelDC optimizes pixels and encodes.
// The score model is a prior over the latent space. Returns decode(v_K).
SolveResult dcdp_solve_latent(const LinearOperator& op, const Measurement& y,
                              const ScoreModel& latent_model, const NoiseSchedule& schedule,
                              const LinearCodec& codec, const SolverConfig& cfg,
                              const Vec* reference = nullptr);

// Posterior-sampling baseline: ancestral reverse steps from pure noise, each
// followed by a likelihood gradient step
//   x <- x - eta * grad_x |A(x0_hat(x)) - y|^2,
// where x0_hat is the posterior-mean estimate and its Jacobian
// (I + (1 - ab_t) H) / sqrt(ab_t) comes from the score Jacobian.
SolveResult dps_solve(const LinearOperator& op, const Measurement& y, const ScoreModel& model,
                      const NoiseSchedule& schedule, const DpsConfig& cfg,
                      const Vec* reference = nullptr);

// grad_x |A(x0_hat(x)) - y|^2 at noise level t. Reuses a precomputed score
// when given (the solver shares one score eval between the ancestral update
// and the guidance term).
Vec dps_likelihood_gradient(const LinearOperator& op, const Vec& y, const ScoreModel& model,
                            const NoiseSchedule& schedule, const Vec& x, int t,
                            const Vec* precomputed_score = nullptr, EvalCounter* counter = nullptr);

inline long long nfe_counter(const SolveResult& result) { return result.nfe.score; }

} // namespace dcdp
