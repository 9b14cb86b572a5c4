// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "operators.hpp"

namespace dcdp {

struct MetricReport {
    double psnr = 0.0;   // dB
    double ssim = 0.0;
    double mse = 0.0;
    long long nfe = 0;
    double wall_time = 0.0; // seconds
};

double mean_squared_error(const Vec& x, const Vec& ref);

// 10 log10(peak^2 / MSE); returns +inf when MSE is exactly zero.
double psnr(const Vec& x, const Vec& ref, double peak = 1.0);

struct SsimOptions {
    int window = 11;     // odd Gaussian window size
    double window_sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double peak = 1.0;
};

// Mean local SSIM over all positions with a circular (wrap-around) Gaussian
// window, averaged across channels.
double ssim(const Vec& x, const Vec& ref, ImageShape shape, const SsimOptions& opt = {});

// Full metric row for a reconstruction. The SSIM window shrinks to fit images
// smaller than the default 11x11.
MetricReport compute_metrics(const Vec& x, const Vec& ref, ImageShape shape, double peak,
                             long long nfe, double wall_time);

// Posterior mean for a Gaussian prior N(prior_mean, prior_cov) under
// y = A x + n, n ~ N(0, sigma_y^2 I):
//   mu + Sigma A^T (A Sigma A^T + sigma_y^2 I)^{-1} (y - A mu)
// The operator is materialized to a dense matrix; desk-scale only.
Vec gaussian_posterior_oracle(const Vec& prior_mean, const Mat& prior_cov,
                              const LinearOperator& op, const Vec& y, double sigma_y);

} // namespace dcdp
