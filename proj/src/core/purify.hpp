// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "schedule.hpp"
#include "score.hpp"

#include <cstdint>
#include <vector>

namespace dcdp {

// Score/Jacobian evaluation tally, owned by each solve.
struct EvalCounter {
    long long score = 0;
    long long jacobian = 0;
};

struct PurifyBackend {
    enum class Kind { AncestralSde, Ddim, Tweedie, FlowOde };
    Kind kind = Kind::AncestralSde;
    int n_steps = 1; // Ddim / FlowOde only

    static PurifyBackend ancestral() { return {Kind::AncestralSde, 1}; }
    static PurifyBackend ddim(int n_steps);
    static PurifyBackend tweedie() { return {Kind::Tweedie, 1}; }
    static PurifyBackend flow_ode(int n_steps);
};

// Trace of a purification pass: (t, |x_t|, cumulative score evals).
struct PurifyTracePoint {
    int t = 0;
    double state_norm = 0.0;
    long long nfe = 0;
};

// CSV dump of a purification trace (columns t, state_norm, nfe).
void write_purify_trace(const std::string& path, const std::vector<PurifyTracePoint>& trace);

// x_T = sqrt(ab_T) x + sqrt(1 - ab_T) eps
Vec forward_diffuse(const Vec& x, int t_level, const NoiseSchedule& schedule, Rng& rng);
Vec forward_diffuse(const Vec& x, int t_level, const NoiseSchedule& schedule, std::uint64_t seed);

// Ancestral reverse chain x_{t-1} = (x_t + beta_t s) / sqrt(1 - beta_t) + sqrt(beta_t) eps
// for t = T..1; the t = 1 step adds no noise.
Vec reverse_sde(const Vec& x_t, int t_level, const ScoreModel& model, const NoiseSchedule& schedule,
                Rng& rng, EvalCounter* counter = nullptr, std::vector<PurifyTracePoint>* trace = nullptr);

// Deterministic reverse updates on a uniform sub-grid of n_steps intervals
// from T down to 0: posterior-mean estimate, implied noise, jump.
Vec ddim_reverse(const Vec& x_t, int t_level, const ScoreModel& model, const NoiseSchedule& schedule,
                 int n_steps, EvalCounter* counter = nullptr,
                 std::vector<PurifyTracePoint>* trace = nullptr);

// One-step posterior mean (x + (1 - ab) * score) / sqrt(ab). t = 0 is the identity.
Vec tweedie_denoise(const Vec& x_t, int t_level, const ScoreModel& model,
                    const NoiseSchedule& schedule, EvalCounter* counter = nullptr);

// Probability-flow map to t = 0, integrated with classic RK4 in lambda = log
// alpha_bar (dx/dlambda = (x + score) / 2), which removes the schedule's
// per-cell rate from the right-hand side. 4 score evals per step.
Vec flow_ode_map(const Vec& x_t, int t_level, const ScoreModel& model, const NoiseSchedule& schedule,
                 int n_steps, EvalCounter* counter = nullptr);

// Forward diffusion to t_level followed by the selected reverse backend.
// t_level = 0 returns x unchanged for every backend. DDIM sub-grids are
// clamped to at most t_level intervals.
Vec dpur(const Vec& x, int t_level, const PurifyBackend& backend, const ScoreModel& model,
         const NoiseSchedule& schedule, std::uint64_t seed, EvalCounter* counter = nullptr,
         std::vector<PurifyTracePoint>* trace = nullptr);

} // namespace dcdp
