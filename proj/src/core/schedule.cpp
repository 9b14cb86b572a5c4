// SPDX-License-Identifier: Apache-2.0
#include "schedule.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace dcdp {

NoiseSchedule NoiseSchedule::vp_linear(int n_steps, double beta_min, double beta_max) {
    if (n_steps < 1)
        throw std::invalid_argument("NoiseSchedule: n_steps must be >= 1");
    if (!(beta_min > 0.0) || !(beta_max < 1.0) || beta_min > beta_max)
        throw std::invalid_argument("NoiseSchedule: need 0 < beta_min <= beta_max < 1");

    NoiseSchedule s;
    s.n_steps_ = n_steps;
    s.beta_.resize(n_steps);
    if (n_steps == 1) {
        s.beta_[0] = beta_min;
    } else {
        for (int t = 1; t <= n_steps; ++t)
            s.beta_[t - 1] = beta_min + (beta_max - beta_min) * double(t - 1) / double(n_steps - 1);
    }
    s.alpha_bar_.resize(n_steps + 1);
    s.log_alpha_bar_.resize(n_steps + 1);
    s.alpha_bar_[0] = 1.0;
    s.log_alpha_bar_[0] = 0.0;
    for (int t = 1; t <= n_steps; ++t) {
        s.alpha_bar_[t] = s.alpha_bar_[t - 1] * (1.0 - s.beta_[t - 1]);
        s.log_alpha_bar_[t] = s.log_alpha_bar_[t - 1] + std::log1p(-s.beta_[t - 1]);
    }
    return s;
}

double NoiseSchedule::beta(int t) const {
    if (t < 1 || t > n_steps_)
        throw std::out_of_range("NoiseSchedule::beta: t must be in 1..N, got " + std::to_string(t));
    return beta_[t - 1];
}

double NoiseSchedule::alpha_bar(int t) const {
    if (t < 0 || t > n_steps_)
        throw std::out_of_range("NoiseSchedule::alpha_bar: t must be in 0..N, got " + std::to_string(t));
    return alpha_bar_[t];
}

double NoiseSchedule::alpha_bar_at(double u) const {
    if (u < 0.0 || u > double(n_steps_))
        throw std::out_of_range("NoiseSchedule::alpha_bar_at: u outside [0, N]");
    int lo = int(std::floor(u));
    if (lo == n_steps_) return alpha_bar_[n_steps_];
    double frac = u - double(lo);
    return std::exp(log_alpha_bar_[lo] * (1.0 - frac) + log_alpha_bar_[lo + 1] * frac);
}

std::vector<int> purification_times(int k_total, int t_start, int t_end) {
    if (k_total < 1)
        throw std::invalid_argument("purification_times: K must be >= 1");
    if (t_end < 0 || t_end > t_start)
        throw std::invalid_argument("purification_times: need 0 <= t_end <= t_start");
    if (k_total == 1 && t_start != t_end)
        throw std::invalid_argument("purification_times: K = 1 requires t_start == t_end");

    std::vector<int> times(k_total);
    if (k_total == 1) {
        times[0] = t_start;
        return times;
    }
    for (int k = 0; k < k_total; ++k) {
        double v = double(t_start) + (double(t_end) - double(t_start)) * double(k) / double(k_total - 1);
        times[k] = int(std::floor(v + 0.5)); // round half-up
    }
    return times;
}

} // namespace dcdp
