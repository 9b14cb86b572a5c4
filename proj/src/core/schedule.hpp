// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <vector>

namespace dcdp {

// Discrete variance-preserving noise schedule on the integer grid
// t in {0, 1, ..., N}, where t = 0 is clean data.
//
//   beta[t]      for t = 1..N, linearly spaced in (0, 1)
//   alpha_bar[t] = prod_{s=1..t} (1 - beta[s]),  alpha_bar[0] = 1
class NoiseSchedule {
public:
    static NoiseSchedule vp_linear(int n_steps, double beta_min, double beta_max);

    int steps() const { return n_steps_; }

    // t in 1..N
    double beta(int t) const;
    // t in 0..N
    double alpha_bar(int t) const;

    // Geometric interpolation of alpha_bar for continuous u in [0, N];
    // exact at integer u. Used by the probability-flow integrator.
    double alpha_bar_at(double u) const;

private:
    NoiseSchedule() = default;
    int n_steps_ = 0;
    Eigen::VectorXd beta_;      // size N, beta_[t-1] = beta at step t
    Eigen::VectorXd alpha_bar_; // size N+1
    Eigen::VectorXd log_alpha_bar_;
};

// Linearly decaying purification time schedule {T_k}, k = 1..K, from
// t_start down to t_end, rounded half-up to integers. Monotone
// non-increasing for every valid input.
std::vector<int> purification_times(int k_total, int t_start, int t_end);

} // namespace dcdp
