// SPDX-License-Identifier: Apache-2.0
#include "metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace dcdp {

double mean_squared_error(const Vec& x, const Vec& ref) {
    if (x.size() != ref.size() || x.size() == 0)
        throw std::invalid_argument("mean_squared_error: shape mismatch");
    return (x - ref).squaredNorm() / double(x.size());
}

double psnr(const Vec& x, const Vec& ref, double peak) {
    if (!(peak > 0.0)) throw std::invalid_argument("psnr: peak must be positive");
    double mse = mean_squared_error(x, ref);
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / mse);
}

double ssim(const Vec& x, const Vec& ref, ImageShape shape, const SsimOptions& opt) {
    if (x.size() != shape.size() || ref.size() != shape.size())
        throw std::invalid_argument("ssim: shape mismatch");
    if (opt.window < 1 || opt.window % 2 == 0)
        throw std::invalid_argument("ssim: window must be odd");
    if (shape.height < opt.window || shape.width < opt.window)
        throw std::invalid_argument("ssim: image smaller than window");

    const Mat win = gaussian_kernel(opt.window, opt.window_sigma);
    const int half = opt.window / 2;
    const int h = shape.height, w = shape.width;
    const double c1 = (opt.k1 * opt.peak) * (opt.k1 * opt.peak);
    const double c2 = (opt.k2 * opt.peak) * (opt.k2 * opt.peak);

    double total = 0.0;
    for (int c = 0; c < shape.channels; ++c) {
        const int base = c * h * w;
        double channel_sum = 0.0;
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j) {
                double mx = 0.0, my = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
                for (int a = 0; a < opt.window; ++a) {
                    int ii = ((i + a - half) % h + h) % h;
                    for (int b = 0; b < opt.window; ++b) {
                        int jj = ((j + b - half) % w + w) % w;
                        double wk = win(a, b);
                        double xv = x[base + ii * w + jj];
                        double yv = ref[base + ii * w + jj];
                        mx += wk * xv;
                        my += wk * yv;
                        sxx += wk * xv * xv;
                        syy += wk * yv * yv;
                        sxy += wk * xv * yv;
                    }
                }
                double vx = sxx - mx * mx;
                double vy = syy - my * my;
                double cov = sxy - mx * my;
                double num = (2.0 * mx * my + c1) * (2.0 * cov + c2);
                double den = (mx * mx + my * my + c1) * (vx + vy + c2);
                channel_sum += num / den;
            }
        total += channel_sum / double(h * w);
    }
    return total / double(shape.channels);
}

MetricReport compute_metrics(const Vec& x, const Vec& ref, ImageShape shape, double peak,
                             long long nfe, double wall_time) {
    MetricReport report;
    report.mse = mean_squared_error(x, ref);
    report.psnr = psnr(x, ref, peak);
    SsimOptions opt;
    opt.peak = peak;
    opt.window = std::min({11, shape.height, shape.width});
    if (opt.window % 2 == 0) --opt.window;
    report.ssim = ssim(x, ref, shape, opt);
    report.nfe = nfe;
    report.wall_time = wall_time;
    return report;
}

Vec gaussian_posterior_oracle(const Vec& prior_mean, const Mat& prior_cov,
                              const LinearOperator& op, const Vec& y, double sigma_y) {
    const int n = op.in_shape().size();
    const int m = op.out_shape().size();
    if (prior_mean.size() != n || prior_cov.rows() != n || prior_cov.cols() != n)
        throw std::invalid_argument("gaussian_posterior_oracle: prior dimension mismatch");
    if (y.size() != m) throw std::invalid_argument("gaussian_posterior_oracle: measurement dimension mismatch");
    if (sigma_y < 0.0) throw std::invalid_argument("gaussian_posterior_oracle: sigma_y must be nonnegative");

    Mat a = materialize(op);
    Mat gram = a * prior_cov * a.transpose();
    gram.diagonal().array() += sigma_y * sigma_y;
    Eigen::LDLT<Mat> solver(gram);
    if (solver.info() != Eigen::Success)
        throw std::runtime_error("gaussian_posterior_oracle: measurement covariance not factorizable");
    Vec innovation = y - a * prior_mean;
    return prior_mean + prior_cov * (a.transpose() * solver.solve(innovation));
}

} // namespace dcdp
