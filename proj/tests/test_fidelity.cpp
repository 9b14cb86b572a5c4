// SPDX-License-Identifier: Apache-2.0
#include "core/fidelity.hpp"
#include "test_util.hpp"

#include <doctest.h>

using namespace dcdp;
using namespace dcdp::testutil;

TEST_SUITE_BEGIN("fidelity");

namespace {

// Largest eigenvalue of A^T A by power iteration (test-side oracle).
double lipschitz(const LinearOperator& op, int iters = 200) {
    Rng rng(123);
    Vec v = rng.normal_vec(op.in_shape().size());
    v.normalize();
    double lambda = 0.0;
    for (int i = 0; i < iters; ++i) {
        Vec w = op.adjoint(op.apply(v));
        lambda = w.norm();
        if (lambda == 0.0) return 0.0;
        v = w / lambda;
    }
    return lambda;
}

} // namespace

TEST_CASE("fidelity loss values") {
    ImageShape shape{4, 4, 1};
    auto id = make_identity(shape);
    SUBCASE("exact fit gives zero") {
        Rng rng(1);
        Vec x = rng.normal_vec(16);
        CHECK(fidelity_loss(*id, x, x) == 0.0);
    }
    SUBCASE("half squared norm") {
        Vec x = Vec::Zero(16);
        Vec y = Vec::Zero(16);
        y[0] = 1.0;
        CHECK(fidelity_loss(*id, x, y) == doctest::Approx(0.5));
    }
    SUBCASE("shape mismatch rejected") {
        CHECK_THROWS_AS(fidelity_loss(*id, Vec::Zero(9), Vec::Zero(16)), std::invalid_argument);
    }
}

TEST_CASE("loss gradient matches finite differences") {
    ImageShape shape{4, 4, 1};
    auto op = make_blur(shape, gaussian_kernel(3, 1.0));
    Rng rng(2);
    Vec y = rng.normal_vec(16);
    Vec x = rng.normal_vec(16);
    Vec analytic = op->adjoint(op->apply(x) - y);
    Vec fd = fd_gradient([&](const Vec& p) { return fidelity_loss(*op, p, y); }, x, 1e-6);
    CHECK((analytic - fd).norm() / fd.norm() < 1e-6);
}

TEST_CASE("momentum descent on the identity task") {
    ImageShape shape{4, 4, 1};
    auto id = make_identity(shape);
    Rng rng(3);
    Vec y = rng.normal_vec(16);
    FidelityConfig cfg;
    cfg.tau = 400;
    cfg.learning_rate = 0.15;
    cfg.momentum = 0.9;
    std::vector<double> trace;
    Vec x = data_fidelity(*id, y, Vec::Zero(16), cfg, &trace);
    REQUIRE(trace.size() == 401);
    CHECK(trace.back() < 1e-8 * trace.front());
    CHECK((x - y).norm() / y.norm() < 1e-4);
}

TEST_CASE("zero steps returns the initial point unchanged") {
    ImageShape shape{4, 4, 1};
    auto id = make_identity(shape);
    Rng rng(4);
    Vec y = rng.normal_vec(16);
    Vec v0 = rng.normal_vec(16);
    FidelityConfig cfg;
    cfg.tau = 0;
    Vec x = data_fidelity(*id, y, v0, cfg);
    CHECK((x - v0).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("loss does not increase on the shipped task analogues") {
    ImageShape shape{16, 16, 1};
    Rng rng(5);
    Vec truth = rng.normal_vec(shape.size());
    struct TaskCase {
        std::unique_ptr<LinearOperator> op;
        double lr;
    };
    std::vector<TaskCase> cases;
    cases.push_back({make_inpainting(shape, 5, 5, 6, 6), 0.18});
    cases.push_back({make_downsample(shape, 4), 2.0});
    cases.push_back({make_blur(shape, gaussian_kernel(9, 1.5)), 0.18});
    cases.push_back({make_blur(shape, motion_kernel(7, 7.0, 0.7853981633974483)), 0.18});
    for (auto& tc : cases) {
        auto m = measure(*tc.op, truth, 0.0, 6);
        FidelityConfig cfg;
        cfg.tau = 50;
        cfg.learning_rate = tc.lr;
        cfg.momentum = 0.9;
        std::vector<double> trace;
        data_fidelity(*tc.op, m.y, Vec::Zero(shape.size()), cfg, &trace);
        CHECK(trace.back() <= trace.front());
    }
}

TEST_CASE("converges to the range projection of y") {
    // small dense instance; oracle = SVD projection onto range(A)
    auto op = make_downsample(ImageShape{4, 4, 1}, 2);
    Rng rng(7);
    Vec y = rng.normal_vec(op->out_shape().size());
    double lip = lipschitz(*op);
    FidelityConfig cfg;
    cfg.momentum = 0.9;
    cfg.learning_rate = 0.5 * 2.0 * (1.0 - cfg.momentum) / lip;
    cfg.tau = 4000;
    Vec v0 = rng.normal_vec(op->in_shape().size());
    Vec x = data_fidelity(*op, y, v0, cfg);

    Mat a = materialize(*op);
    Eigen::JacobiSVD<Mat> svd(a, Eigen::ComputeThinU);
    Vec y_range = svd.matrixU() * (svd.matrixU().transpose() * y);
    CHECK((op->apply(x) - y_range).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("bitwise deterministic") {
    ImageShape shape{8, 8, 1};
    auto op = make_blur(shape, gaussian_kernel(5, 1.0));
    Rng rng(8);
    Vec y = rng.normal_vec(shape.size());
    Vec v0 = rng.normal_vec(shape.size());
    FidelityConfig cfg;
    cfg.tau = 37;
    cfg.learning_rate = 0.15;
    Vec a = data_fidelity(*op, y, v0, cfg);
    Vec b = data_fidelity(*op, y, v0, cfg);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("divergence aborts with the step index") {
    ImageShape shape{4, 4, 1};
    auto id = make_identity(shape);
    Rng rng(9);
    Vec y = rng.normal_vec(16);
    FidelityConfig cfg;
    cfg.tau = 500;
    cfg.learning_rate = 1e150; // overflow to inf quickly
    cfg.momentum = 0.0;
    CHECK_THROWS_WITH_AS(data_fidelity(*id, y, Vec::Zero(16), cfg),
                         doctest::Contains("inner step"), std::runtime_error);
}

TEST_CASE("early stop floor") {
    ImageShape shape{4, 4, 1};
    auto id = make_identity(shape);
    Rng rng(10);
    Vec y = rng.normal_vec(16);
    FidelityConfig cfg;
    cfg.tau = 1000;
    cfg.learning_rate = 0.15;
    cfg.stop_loss = 1e-3;
    std::vector<double> trace;
    data_fidelity(*id, y, Vec::Zero(16), cfg, &trace);
    CHECK(trace.size() < 1000);
    CHECK(trace.back() <= 1e-3);
}

TEST_CASE("latent data fidelity") {
    Rng rng(11);
    const int n = 12, r = 4;
    Mat a(n, r);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < r; ++j) a(i, j) = rng.normal();
    Eigen::HouseholderQR<Mat> qr(a);
    Mat basis = Mat(qr.householderQ()).leftCols(r);
    auto codec = LinearCodec::orthonormal(basis);
    auto id = make_identity(ImageShape{n, 1, 1});

    SUBCASE("exact fit is a fixed point") {
        Vec z_star = rng.normal_vec(r);
        Vec y = codec.decode(z_star);
        FidelityConfig cfg;
        cfg.tau = 25;
        cfg.learning_rate = 0.15;
        std::vector<double> trace;
        Vec z = data_fidelity_latent(*id, y, z_star, codec, cfg, &trace);
        CHECK(trace.front() < 1e-20);
        CHECK((z - z_star).cwiseAbs().maxCoeff() < 1e-12);
    }
    SUBCASE("zero steps is the identity") {
        Vec z0 = rng.normal_vec(r);
        FidelityConfig cfg;
        cfg.tau = 0;
        Vec z = data_fidelity_latent(*id, rng.normal_vec(n), z0, codec, cfg);
        CHECK((z - z0).cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("gradient through the decoder matches finite differences") {
        Vec y = rng.normal_vec(n);
        Vec z = rng.normal_vec(r);
        Vec analytic = codec.decode_matrix().transpose() * id->adjoint(id->apply(codec.decode(z)) - y);
        Vec fd = fd_gradient(
            [&](const Vec& p) { return 0.5 * (id->apply(codec.decode(p)) - y).squaredNorm(); }, z,
            1e-6);
        CHECK((analytic - fd).norm() / fd.norm() < 1e-6);
    }
}

TEST_CASE("config validation") {
    FidelityConfig cfg;
    cfg.learning_rate = 0.0;
    ImageShape shape{2, 2, 1};
    auto id = make_identity(shape);
    CHECK_THROWS_AS(data_fidelity(*id, Vec::Zero(4), Vec::Zero(4), cfg), std::invalid_argument);
    cfg.learning_rate = 0.1;
    cfg.momentum = 1.0;
    CHECK_THROWS_AS(data_fidelity(*id, Vec::Zero(4), Vec::Zero(4), cfg), std::invalid_argument);
}

TEST_SUITE_END();
