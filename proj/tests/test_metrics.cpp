// SPDX-License-Identifier: Apache-2.0
#include "core/metrics.hpp"
#include "test_util.hpp"

#include <doctest.h>

using namespace dcdp;
using namespace dcdp::testutil;

TEST_SUITE_BEGIN("metrics");

TEST_CASE("psnr") {
    Rng rng(1);
    Vec x = rng.normal_vec(64);
    SUBCASE("identical inputs hit the infinity sentinel") {
        CHECK(std::isinf(psnr(x, x, 1.0)));
    }
    SUBCASE("unit mse at unit peak is 0 dB") {
        Vec ref = Vec::Zero(4);
        Vec off = Vec::Ones(4);
        CHECK(psnr(off, ref, 1.0) == doctest::Approx(0.0));
    }
    SUBCASE("mse 0.01 at unit peak is 20 dB") {
        Vec ref = Vec::Zero(4);
        Vec off = Vec::Constant(4, 0.1);
        CHECK(psnr(off, ref, 1.0) == doctest::Approx(20.0));
    }
    SUBCASE("rejections") {
        CHECK_THROWS_AS(psnr(x, Vec::Zero(8), 1.0), std::invalid_argument);
        CHECK_THROWS_AS(psnr(x, x, 0.0), std::invalid_argument);
    }
}

TEST_CASE("ssim") {
    ImageShape shape{16, 16, 1};
    Rng rng(2);
    Vec x = rng.normal_vec(shape.size());
    SUBCASE("self similarity is exactly one") {
        CHECK(ssim(x, x, shape) == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("constant images reduce to the luminance term") {
        double a = 0.3, b = 0.7;
        Vec xa = Vec::Constant(shape.size(), a);
        Vec xb = Vec::Constant(shape.size(), b);
        SsimOptions opt;
        double c1 = (opt.k1 * opt.peak) * (opt.k1 * opt.peak);
        double expected = (2.0 * a * b + c1) / (a * a + b * b + c1);
        CHECK(ssim(xa, xb, shape) == doctest::Approx(expected).epsilon(1e-9));
    }
    SUBCASE("symmetric in its arguments") {
        Vec y = rng.normal_vec(shape.size());
        CHECK(std::abs(ssim(x, y, shape) - ssim(y, x, shape)) < 1e-12);
    }
    SUBCASE("window larger than image rejected") {
        CHECK_THROWS_AS(ssim(Vec::Zero(16), Vec::Zero(16), ImageShape{4, 4, 1}),
                        std::invalid_argument);
    }
}

TEST_CASE("psnr and ssim invariance under simultaneous shifts") {
    ImageShape shape{12, 12, 1};
    Rng rng(3);
    Vec x = rng.normal_vec(shape.size());
    Vec y = rng.normal_vec(shape.size());
    auto shift = [&](const Vec& v, int di, int dj) {
        Vec out(v.size());
        for (int i = 0; i < 12; ++i)
            for (int j = 0; j < 12; ++j)
                out[((i + di) % 12) * 12 + (j + dj) % 12] = v[i * 12 + j];
        return out;
    };
    Vec xs = shift(x, 3, 7), ys = shift(y, 3, 7);
    CHECK(psnr(xs, ys, 1.0) == doctest::Approx(psnr(x, y, 1.0)).epsilon(1e-12));
    CHECK(ssim(xs, ys, shape) == doctest::Approx(ssim(x, y, shape)).epsilon(1e-9));
}

TEST_CASE("metric report ties psnr to mse") {
    ImageShape shape{8, 8, 1};
    Rng rng(6);
    Vec ref = rng.normal_vec(shape.size());
    Vec x = ref + 0.05 * rng.normal_vec(shape.size());
    MetricReport r = compute_metrics(x, ref, shape, 1.0, 42, 0.5);
    CHECK(r.mse > 0.0);
    CHECK(r.psnr == doctest::Approx(10.0 * std::log10(1.0 / r.mse)).epsilon(1e-12));
    CHECK(r.ssim > 0.0);
    CHECK(r.ssim <= 1.0);
    CHECK(r.nfe == 42);
    CHECK(r.wall_time == 0.5);
    // window shrinks for images below the default size
    MetricReport small = compute_metrics(Vec::Ones(25), Vec::Ones(25), ImageShape{5, 5, 1}, 1.0, 0, 0.0);
    CHECK(small.ssim == doctest::Approx(1.0));
}

TEST_CASE("gaussian posterior oracle") {
    Rng rng(4);
    const int n = 16;
    ImageShape shape{4, 4, 1};
    auto id = make_identity(shape);
    Vec mu = rng.normal_vec(n);
    Mat cov = [&] {
        Mat a(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) a(i, j) = rng.normal();
        return Mat(a * a.transpose() / n + 0.5 * Mat::Identity(n, n));
    }();
    Vec y = rng.normal_vec(n);

    SUBCASE("uninformative data limit recovers the prior mean") {
        Vec post = gaussian_posterior_oracle(mu, cov, *id, y, 1e8);
        CHECK((post - mu).cwiseAbs().maxCoeff() < 1e-6);
    }
    SUBCASE("exact data limit recovers the measurement") {
        Vec post = gaussian_posterior_oracle(mu, cov, *id, y, 1e-8);
        CHECK((post - y).cwiseAbs().maxCoeff() < 1e-6);
    }
    SUBCASE("matches brute-force joint-gaussian conditioning") {
        auto op = make_downsample(shape, 2);
        const int m = op->out_shape().size();
        double sigma = 0.2;
        Vec ym = rng.normal_vec(m);
        Vec post = gaussian_posterior_oracle(mu, cov, *op, ym, sigma);

        Mat a = materialize(*op);
        // stacked covariance blocks of (x, y)
        Mat joint(n + m, n + m);
        joint.topLeftCorner(n, n) = cov;
        joint.topRightCorner(n, m) = cov * a.transpose();
        joint.bottomLeftCorner(m, n) = a * cov;
        joint.bottomRightCorner(m, m) = a * cov * a.transpose() + sigma * sigma * Mat::Identity(m, m);
        Vec cond = mu + joint.topRightCorner(n, m) *
                            joint.bottomRightCorner(m, m).ldlt().solve(ym - a * mu);
        CHECK((post - cond).cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_SUITE_END();
