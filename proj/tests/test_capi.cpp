// SPDX-License-Identifier: Apache-2.0
// Exercises the shared-library surface: handles, error codes, solver round
// trips and the experiment entry points.
#include <dcdp/dcdp.h>

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

TEST_SUITE_BEGIN("capi");

namespace {

struct ScheduleHandle {
    dcdp_schedule* p = nullptr;
    ~ScheduleHandle() { dcdp_schedule_destroy(p); }
};

struct ModelHandle {
    dcdp_score_model* p = nullptr;
    ~ModelHandle() { dcdp_score_model_destroy(p); }
};

struct OperatorHandle {
    dcdp_operator* p = nullptr;
    ~OperatorHandle() { dcdp_operator_destroy(p); }
};

} // namespace

TEST_CASE("version and error reporting") {
    CHECK(std::string(dcdp_version()) == "0.1.0");
    dcdp_schedule* bad = nullptr;
    CHECK(dcdp_schedule_create(-3, 1e-4, 0.02, &bad) == DCDP_ERR_INVALID_ARGUMENT);
    CHECK(std::string(dcdp_last_error()).find("n_steps") != std::string::npos);
    CHECK(bad == nullptr);
}

TEST_CASE("schedule handle") {
    ScheduleHandle s;
    REQUIRE(dcdp_schedule_create(100, 1e-3, 0.05, &s.p) == DCDP_OK);
    CHECK(dcdp_schedule_steps(s.p) == 100);
    double ab0 = 0, abN = 0, beta1 = 0;
    CHECK(dcdp_schedule_alpha_bar(s.p, 0, &ab0) == DCDP_OK);
    CHECK(dcdp_schedule_alpha_bar(s.p, 100, &abN) == DCDP_OK);
    CHECK(dcdp_schedule_beta(s.p, 1, &beta1) == DCDP_OK);
    CHECK(ab0 == 1.0);
    CHECK(abN < 1.0);
    CHECK(beta1 == doctest::Approx(1e-3));
    CHECK(dcdp_schedule_alpha_bar(s.p, 101, &abN) == DCDP_ERR_INVALID_ARGUMENT);

    std::vector<int> times(10);
    CHECK(dcdp_purification_times(10, 40, 0, times.data()) == DCDP_OK);
    CHECK(times.front() == 40);
    CHECK(times.back() == 0);
    CHECK(dcdp_purification_times(0, 40, 0, times.data()) == DCDP_ERR_INVALID_ARGUMENT);
}

TEST_CASE("score model round trip") {
    ScheduleHandle s;
    REQUIRE(dcdp_schedule_create(100, 1e-3, 0.05, &s.p) == DCDP_OK);
    const int dim = 3;
    double weights[1] = {1.0};
    double means[3] = {0.0, 0.0, 0.0};
    double vars[3] = {1.0, 1.0, 1.0};
    ModelHandle m;
    REQUIRE(dcdp_score_model_gmm(s.p, weights, means, vars, 1, dim, &m.p) == DCDP_OK);
    CHECK(dcdp_score_model_dim(m.p) == dim);

    double x[3] = {0.5, -1.0, 2.0};
    double score[3];
    REQUIRE(dcdp_score_eval(m.p, x, 10, score) == DCDP_OK);
    for (int i = 0; i < dim; ++i) CHECK(score[i] == doctest::Approx(-x[i]));

    double ld = 0;
    REQUIRE(dcdp_score_log_density(m.p, x, 0, &ld) == DCDP_OK);
    double expected = -0.5 * (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) -
                      0.5 * dim * std::log(2.0 * 3.14159265358979323846);
    CHECK(ld == doctest::Approx(expected));

    double jac[9];
    REQUIRE(dcdp_score_jacobian_eval(m.p, x, 5, jac) == DCDP_OK);
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j)
            CHECK(jac[i * dim + j] == doctest::Approx(i == j ? -1.0 : 0.0));

    double nan_x[3] = {0.0, std::nan(""), 0.0};
    CHECK(dcdp_score_eval(m.p, nan_x, 10, score) == DCDP_ERR_INVALID_ARGUMENT);
}

TEST_CASE("operator handle and measurement") {
    OperatorHandle op;
    REQUIRE(dcdp_operator_parse("downsample h=8 w=8 c=1 factor=2", &op.p) == DCDP_OK);
    CHECK(dcdp_operator_in_dim(op.p) == 64);
    CHECK(dcdp_operator_out_dim(op.p) == 16);

    double max_rel = 1.0;
    REQUIRE(dcdp_operator_adjoint_check(op.p, 20, 7, &max_rel) == DCDP_OK);
    CHECK(max_rel < 1e-10);

    std::vector<double> x(64, 0.25), y(16, 0.0);
    REQUIRE(dcdp_operator_apply(op.p, x.data(), y.data()) == DCDP_OK);
    CHECK(y[0] == doctest::Approx(0.25));

    std::vector<double> noisy(16);
    REQUIRE(dcdp_measure(op.p, x.data(), 0.05, 42, noisy.data()) == DCDP_OK);
    std::vector<double> noisy2(16);
    REQUIRE(dcdp_measure(op.p, x.data(), 0.05, 42, noisy2.data()) == DCDP_OK);
    CHECK(std::memcmp(noisy.data(), noisy2.data(), sizeof(double) * 16) == 0);

    OperatorHandle bad;
    CHECK(dcdp_operator_parse("warp h=2 w=2", &bad.p) == DCDP_ERR_INVALID_ARGUMENT);
}

TEST_CASE("solve through the shared library") {
    ScheduleHandle s;
    REQUIRE(dcdp_schedule_create(100, 1e-3, 0.05, &s.p) == DCDP_OK);
    const int dim = 16;
    std::vector<double> weights{1.0}, means(dim, 0.5), vars(dim, 0.04);
    ModelHandle m;
    REQUIRE(dcdp_score_model_gmm(s.p, weights.data(), means.data(), vars.data(), 1, dim, &m.p) ==
            DCDP_OK);
    OperatorHandle op;
    REQUIRE(dcdp_operator_parse("identity h=4 w=4 c=1", &op.p) == DCDP_OK);

    std::vector<double> truth(dim, 0.5), y(dim);
    REQUIRE(dcdp_measure(op.p, truth.data(), 0.05, 3, y.data()) == DCDP_OK);

    dcdp_solver_options opt{};
    opt.outer_iterations = 5;
    opt.tau = 50;
    opt.learning_rate = 0.15;
    opt.momentum = 0.9;
    opt.backend = DCDP_BACKEND_DDIM;
    opt.backend_steps = 10;
    opt.t_start = 40;
    opt.t_end = 0;
    opt.seed = 5;

    dcdp_result* res = nullptr;
    REQUIRE(dcdp_solve(op.p, y.data(), m.p, &opt, &res) == DCDP_OK);
    REQUIRE(res != nullptr);
    CHECK(dcdp_result_dim(res) == dim);
    CHECK(dcdp_result_iterations(res) == 5);
    CHECK(dcdp_result_nfe_score(res) > 0);
    CHECK(dcdp_result_wall_time(res) >= 0.0);

    std::vector<double> recon(dim);
    REQUIRE(dcdp_result_reconstruction(res, recon.data()) == DCDP_OK);
    double psnr_v = 0;
    REQUIRE(dcdp_psnr(recon.data(), truth.data(), dim, 1.0, &psnr_v) == DCDP_OK);
    CHECK(psnr_v > 15.0);
    double ssim_v = 0;
    REQUIRE(dcdp_ssim(recon.data(), truth.data(), 4, 4, 1, 1.0, &ssim_v) ==
            DCDP_ERR_INVALID_ARGUMENT); // image smaller than the ssim window

    // rerun is bitwise identical
    dcdp_result* res2 = nullptr;
    REQUIRE(dcdp_solve(op.p, y.data(), m.p, &opt, &res2) == DCDP_OK);
    std::vector<double> recon2(dim);
    REQUIRE(dcdp_result_reconstruction(res2, recon2.data()) == DCDP_OK);
    CHECK(std::memcmp(recon.data(), recon2.data(), sizeof(double) * dim) == 0);

    dcdp_result_destroy(res);
    dcdp_result_destroy(res2);

    // dps baseline through the C surface
    dcdp_dps_options dps_opt{};
    dps_opt.n_steps = 0;
    dps_opt.eta = 0.05;
    dps_opt.seed = 7;
    dcdp_result* dres = nullptr;
    REQUIRE(dcdp_dps_solve(op.p, y.data(), m.p, &dps_opt, &dres) == DCDP_OK);
    CHECK(dcdp_result_nfe_score(dres) == 100);
    CHECK(dcdp_result_nfe_jacobian(dres) == 100);
    dcdp_result_destroy(dres);
}

TEST_CASE("latent solve and codec through the shared library") {
    ScheduleHandle s;
    REQUIRE(dcdp_schedule_create(100, 1e-3, 0.05, &s.p) == DCDP_OK);

    // dataset spanning a 2-d subspace of R^8
    const int n = 8, pts = 20, r = 2;
    std::vector<double> data(pts * n);
    for (int i = 0; i < pts; ++i)
        for (int j = 0; j < n; ++j)
            data[i * n + j] = (i % 3 - 1) * (j + 1) * 0.1 + (i % 5 - 2) * ((j % 2) ? 0.2 : -0.1);
    dcdp_codec* codec = nullptr;
    REQUIRE(dcdp_codec_pca(data.data(), pts, n, r, &codec) == DCDP_OK);
    CHECK(dcdp_codec_latent_dim(codec) == r);
    CHECK(dcdp_codec_pixel_dim(codec) == n);

    std::vector<double> z{0.3, -0.2}, x(n), z_back(r);
    REQUIRE(dcdp_codec_decode(codec, z.data(), x.data()) == DCDP_OK);
    REQUIRE(dcdp_codec_encode(codec, x.data(), z_back.data()) == DCDP_OK);
    CHECK(z_back[0] == doctest::Approx(z[0]).epsilon(1e-12));
    CHECK(z_back[1] == doctest::Approx(z[1]).epsilon(1e-12));

    std::vector<double> w{1.0}, mz(r, 0.0), vz(r, 1.0);
    ModelHandle lm;
    REQUIRE(dcdp_score_model_gmm(s.p, w.data(), mz.data(), vz.data(), 1, r, &lm.p) == DCDP_OK);
    OperatorHandle op;
    REQUIRE(dcdp_operator_parse("identity h=8 w=1 c=1", &op.p) == DCDP_OK);

    dcdp_solver_options opt{};
    opt.outer_iterations = 3;
    opt.tau = 200;
    opt.learning_rate = 0.15;
    opt.momentum = 0.9;
    opt.backend = DCDP_BACKEND_TWEEDIE;
    opt.backend_steps = 1;
    opt.t_start = 0;
    opt.t_end = 0;
    opt.seed = 9;

    dcdp_result* res = nullptr;
    REQUIRE(dcdp_solve_latent(op.p, x.data(), lm.p, codec, &opt, DCDP_LATENT_DC, &res) == DCDP_OK);
    std::vector<double> recon(n);
    REQUIRE(dcdp_result_reconstruction(res, recon.data()) == DCDP_OK);
    for (int j = 0; j < n; ++j) CHECK(recon[j] == doctest::Approx(x[j]).epsilon(1e-5));
    dcdp_result_destroy(res);

    CHECK(dcdp_solve_latent(op.p, x.data(), lm.p, codec, &opt, 99, &res) ==
          DCDP_ERR_INVALID_ARGUMENT);
    dcdp_codec_destroy(codec);
}

TEST_CASE("experiment runner and table through the shared library") {
    fs::path dir = fs::temp_directory_path() / "dcdp_capi_exp";
    fs::remove_all(dir);
    fs::create_directories(dir);

    // tiny gmm prior file (4 pixels)
    auto prior = (dir / "p.gmm").string();
    std::ofstream(prior) << "dim 4\ncomponents 1\nweight 1\nmean 0.5 0.5 0.5 0.5\nvar 0.01 0.01 0.01 0.01\n";
    auto conf = (dir / "e.conf").string();
    std::ofstream(conf) << "[experiment]\noutput = " << (dir / "out").string()
                        << "\nmaster_seed = 1\nseeds = 2\n\n"
                        << "[schedule]\nn_steps = 50\nbeta_min = 1e-3\nbeta_max = 0.05\n\n"
                        << "[prior]\ntype = gmm\nfile = " << prior << "\n\n"
                        << "[task t]\noperator = identity h=2 w=2 c=1\nsigma_y = 0.05\n\n"
                        << "[method m]\ntype = dcdp\nbackend = tweedie\nK = 2\ntau = 20\nlr = 0.15\n"
                        << "momentum = 0.9\nT_start = 20\nT_end = 0\n";

    int failed = -1;
    REQUIRE(dcdp_run_experiment(conf.c_str(), nullptr, 1, 0, 0, &failed) == DCDP_OK);
    CHECK(failed == 0);

    char* table = nullptr;
    REQUIRE(dcdp_emit_table((dir / "out" / "results.csv").string().c_str(), nullptr, &table) ==
            DCDP_OK);
    REQUIRE(table != nullptr);
    CHECK(std::string(table).find("t") != std::string::npos);
    dcdp_string_free(table);

    CHECK(dcdp_run_experiment((dir / "missing.conf").string().c_str(), nullptr, 0, 0, 0, nullptr) ==
          DCDP_ERR_INVALID_ARGUMENT);
}

TEST_SUITE_END();
