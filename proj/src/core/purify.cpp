// SPDX-License-Identifier: Apache-2.0
#include "purify.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

namespace dcdp {

void write_purify_trace(const std::string& path, const std::vector<PurifyTracePoint>& trace) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_purify_trace: cannot open " + path);
    out.precision(10);
    out << "t,state_norm,nfe\n";
    for (const PurifyTracePoint& p : trace) out << p.t << "," << p.state_norm << "," << p.nfe << "\n";
    if (!out) throw std::runtime_error("write_purify_trace: write failed for " + path);
}

PurifyBackend PurifyBackend::ddim(int n_steps) {
    if (n_steps < 1) throw std::invalid_argument("PurifyBackend::ddim: n_steps must be >= 1");
    return {Kind::Ddim, n_steps};
}

PurifyBackend PurifyBackend::flow_ode(int n_steps) {
    if (n_steps < 1) throw std::invalid_argument("PurifyBackend::flow_ode: n_steps must be >= 1");
    return {Kind::FlowOde, n_steps};
}

namespace {

void check_level(int t_level, const NoiseSchedule& schedule, const char* where) {
    if (t_level < 0 || t_level > schedule.steps())
        throw std::out_of_range(std::string(where) + ": T outside 0..N");
}

void check_state(const Vec& x, int t, const char* where) {
    if (!x.allFinite())
        throw std::runtime_error(std::string(where) + ": non-finite state at step t=" + std::to_string(t));
}

void record(std::vector<PurifyTracePoint>* trace, int t, const Vec& x, const EvalCounter* counter) {
    if (trace) trace->push_back({t, x.norm(), counter ? counter->score : 0});
}

} // namespace

Vec forward_diffuse(const Vec& x, int t_level, const NoiseSchedule& schedule, Rng& rng) {
    check_level(t_level, schedule, "forward_diffuse");
    if (t_level == 0) return x;
    double ab = schedule.alpha_bar(t_level);
    return std::sqrt(ab) * x + std::sqrt(1.0 - ab) * rng.normal_vec(x.size());
}

Vec forward_diffuse(const Vec& x, int t_level, const NoiseSchedule& schedule, std::uint64_t seed) {
    Rng rng(seed);
    return forward_diffuse(x, t_level, schedule, rng);
}

Vec reverse_sde(const Vec& x_t, int t_level, const ScoreModel& model, const NoiseSchedule& schedule,
                Rng& rng, EvalCounter* counter, std::vector<PurifyTracePoint>* trace) {
    check_level(t_level, schedule, "reverse_sde");
    Vec x = x_t;
    record(trace, t_level, x, counter);
    for (int t = t_level; t >= 1; --t) {
        double beta = schedule.beta(t);
        Vec s = model.score(x, t);
        if (counter) ++counter->score;
        x = (x + beta * s) / std::sqrt(1.0 - beta);
        if (t > 1) x += std::sqrt(beta) * rng.normal_vec(x.size());
        check_state(x, t - 1, "reverse_sde");
        record(trace, t - 1, x, counter);
    }
    return x;
}

Vec ddim_reverse(const Vec& x_t, int t_level, const ScoreModel& model, const NoiseSchedule& schedule,
                 int n_steps, EvalCounter* counter, std::vector<PurifyTracePoint>* trace) {
    check_level(t_level, schedule, "ddim_reverse");
    if (t_level == 0) return x_t;
    if (n_steps < 1 || n_steps > t_level)
        throw std::invalid_argument("ddim_reverse: need 1 <= n_steps <= T");

    Vec x = x_t;
    record(trace, t_level, x, counter);
    int t_cur = t_level;
    for (int j = n_steps - 1; j >= 0; --j) {
        int t_next = int(std::floor(double(t_level) * double(j) / double(n_steps) + 0.5));
        double ab = schedule.alpha_bar(t_cur);
        Vec s = model.score(x, t_cur);
        if (counter) ++counter->score;
        Vec x0_hat = (x + (1.0 - ab) * s) / std::sqrt(ab);
        double ab_next = schedule.alpha_bar(t_next);
        if (t_next == 0) {
            x = x0_hat;
        } else {
            Vec eps_hat = (x - std::sqrt(ab) * x0_hat) / std::sqrt(1.0 - ab);
            x = std::sqrt(ab_next) * x0_hat + std::sqrt(1.0 - ab_next) * eps_hat;
        }
        check_state(x, t_next, "ddim_reverse");
        record(trace, t_next, x, counter);
        t_cur = t_next;
    }
    return x;
}

Vec tweedie_denoise(const Vec& x_t, int t_level, const ScoreModel& model,
                    const NoiseSchedule& schedule, EvalCounter* counter) {
    check_level(t_level, schedule, "tweedie_denoise");
    if (t_level == 0) return x_t;
    double ab = schedule.alpha_bar(t_level);
    Vec s = model.score(x_t, t_level);
    if (counter) ++counter->score;
    return (x_t + (1.0 - ab) * s) / std::sqrt(ab);
}

Vec flow_ode_map(const Vec& x_t, int t_level, const ScoreModel& model, const NoiseSchedule& schedule,
                 int n_steps, EvalCounter* counter) {
    check_level(t_level, schedule, "flow_ode_map");
    if (n_steps < 1) throw std::invalid_argument("flow_ode_map: n_steps must be >= 1");
    if (t_level == 0) return x_t;

    const double lambda_start = std::log(schedule.alpha_bar(t_level));
    const double h = -lambda_start / double(n_steps); // integrate lambda up to 0
    auto rhs = [&](const Vec& x, double lambda) {
        if (counter) ++counter->score;
        return Vec(0.5 * (x + model.score_at_level(x, std::exp(lambda))));
    };
    Vec x = x_t;
    double lambda = lambda_start;
    for (int i = 0; i < n_steps; ++i) {
        Vec k1 = rhs(x, lambda);
        Vec k2 = rhs(x + 0.5 * h * k1, lambda + 0.5 * h);
        Vec k3 = rhs(x + 0.5 * h * k2, lambda + 0.5 * h);
        Vec k4 = rhs(x + h * k3, lambda + h);
        x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        lambda += h;
        check_state(x, i, "flow_ode_map");
    }
    return x;
}

Vec dpur(const Vec& x, int t_level, const PurifyBackend& backend, const ScoreModel& model,
         const NoiseSchedule& schedule, std::uint64_t seed, EvalCounter* counter,
         std::vector<PurifyTracePoint>* trace) {
    check_level(t_level, schedule, "dpur");
    if (t_level == 0) return x;
    Rng rng(seed);
    Vec noisy = forward_diffuse(x, t_level, schedule, rng);
    switch (backend.kind) {
        case PurifyBackend::Kind::AncestralSde:
            return reverse_sde(noisy, t_level, model, schedule, rng, counter, trace);
        case PurifyBackend::Kind::Ddim:
            return ddim_reverse(noisy, t_level, model, schedule, std::min(backend.n_steps, t_level),
                                counter, trace);
        case PurifyBackend::Kind::Tweedie:
            return tweedie_denoise(noisy, t_level, model, schedule, counter);
        case PurifyBackend::Kind::FlowOde:
            return flow_ode_map(noisy, t_level, model, schedule, backend.n_steps, counter);
    }
    throw std::logic_error("dpur: unreachable backend kind");
}

} // namespace dcdp
