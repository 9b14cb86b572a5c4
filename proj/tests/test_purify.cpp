// SPDX-License-Identifier: Apache-2.0
#include "core/purify.hpp"
#include "core/fidelity.hpp"
#include "test_util.hpp"
#include "toy_priors.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace dcdp;
using namespace dcdp::testutil;

TEST_SUITE_BEGIN("purify");

namespace {

std::shared_ptr<const NoiseSchedule> sched100() {
    static auto s =
        std::make_shared<const NoiseSchedule>(NoiseSchedule::vp_linear(100, 1e-3, 0.05));
    return s;
}

GmmScoreModel standard_model(int dim) {
    return GmmScoreModel(GaussianMixture::isotropic({Vec::Zero(dim)}, 1.0), sched100());
}

GmmScoreModel gaussian_model(const Vec& mu, double var) {
    return GmmScoreModel(GaussianMixture::isotropic({mu}, var), sched100());
}

} // namespace

TEST_CASE("forward diffusion") {
    auto s = sched100();
    Rng rng(1);
    Vec x = rng.normal_vec(5);
    SUBCASE("T = 0 is the identity") {
        Vec out = forward_diffuse(x, 0, *s, 7u);
        CHECK((out - x).cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("deterministic per seed") {
        Vec a = forward_diffuse(x, 40, *s, 7u);
        Vec b = forward_diffuse(x, 40, *s, 7u);
        CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("mean scales by sqrt(alpha_bar)") {
        // pick the level whose alpha_bar is closest to 0.25
        int t_pick = 1;
        double best = 1.0;
        for (int t = 1; t <= 100; ++t) {
            double d = std::abs(s->alpha_bar(t) - 0.25);
            if (d < best) { best = d; t_pick = t; }
        }
        const double ab = s->alpha_bar(t_pick);
        const int draws = 100000;
        Vec fixed = Vec::Constant(4, 2.0);
        Vec acc = Vec::Zero(4);
        for (int i = 0; i < draws; ++i) acc += forward_diffuse(fixed, t_pick, *s, std::uint64_t(i));
        Vec mean = acc / draws;
        double tol = 4.0 * std::sqrt(1.0 - ab) / std::sqrt(double(draws));
        CHECK((mean - std::sqrt(ab) * fixed).cwiseAbs().maxCoeff() < tol);
    }
    SUBCASE("T out of range rejected") {
        CHECK_THROWS_AS(forward_diffuse(x, 101, *s, 1u), std::out_of_range);
        CHECK_THROWS_AS(forward_diffuse(x, -1, *s, 1u), std::out_of_range);
    }
}

TEST_CASE("ancestral reverse") {
    auto s = sched100();
    auto model = standard_model(8);
    SUBCASE("T = 0 is the identity") {
        Rng rng(2);
        Vec x = rng.normal_vec(8);
        Rng chain(3);
        Vec out = reverse_sde(x, 0, model, *s, chain);
        CHECK((out - x).cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("NFE equals T") {
        Rng rng(4);
        Vec x = rng.normal_vec(8);
        EvalCounter counter;
        Rng chain(5);
        reverse_sde(x, 37, model, *s, chain, &counter);
        CHECK(counter.score == 37);
    }
    SUBCASE("full reverse from pure noise reproduces the stationary prior") {
        // standard normal prior: chain outputs should be ~ N(0, I)
        const int runs = 4000, dim = 8;
        Vec acc = Vec::Zero(dim), acc2 = Vec::Zero(dim);
        for (int i = 0; i < runs; ++i) {
            Rng chain(1000 + std::uint64_t(i));
            Vec x_t = chain.normal_vec(dim);
            Vec out = reverse_sde(x_t, 100, model, *s, chain);
            acc += out;
            acc2 += out.cwiseProduct(out);
        }
        Vec mean = acc / runs;
        Vec var = acc2 / runs - mean.cwiseProduct(mean);
        double mean_tol = 4.0 / std::sqrt(double(runs));
        double var_tol = 4.0 * std::sqrt(2.0 / double(runs));
        for (int j = 0; j < dim; ++j) {
            CHECK(std::abs(mean[j]) < mean_tol);
            CHECK(std::abs(var[j] - 1.0) < var_tol);
        }
    }
}

TEST_CASE("tweedie denoiser") {
    auto s = sched100();
    SUBCASE("standard normal prior shrinks by sqrt(alpha_bar)") {
        auto model = standard_model(6);
        Rng rng(6);
        Vec x = rng.normal_vec(6);
        for (int t : {5, 40, 100}) {
            Vec out = tweedie_denoise(x, t, model, *s);
            CHECK((out - std::sqrt(s->alpha_bar(t)) * x).cwiseAbs().maxCoeff() < 1e-12);
        }
    }
    SUBCASE("general gaussian matches the conditional-mean oracle") {
        Rng rng(7);
        const int dim = 4;
        auto prior = random_full_gmm(rng, dim, 1);
        GmmScoreModel model(prior, s);
        const Mat& cov = prior.covariance(0);
        const Vec& mu = prior.mean(0);
        for (int trial = 0; trial < 10; ++trial) {
            int t = 1 + int(rng.uniform() * 100);
            double ab = s->alpha_bar(t);
            Vec x = rng.normal_vec(dim);
            // joint-Gaussian conditioning oracle
            Mat marg = ab * cov + (1.0 - ab) * Mat::Identity(dim, dim);
            Vec oracle = mu + std::sqrt(ab) * cov * marg.ldlt().solve(x - std::sqrt(ab) * mu);
            Vec out = tweedie_denoise(x, t, model, *s);
            CHECK((out - oracle).cwiseAbs().maxCoeff() < 1e-8);
        }
    }
    SUBCASE("mode is a fixed point") {
        Vec mu = Vec::Constant(3, 1.4);
        auto model = gaussian_model(mu, 0.25);
        int t = 30;
        Vec x = std::sqrt(s->alpha_bar(t)) * mu;
        CHECK((tweedie_denoise(x, t, model, *s) - mu).cwiseAbs().maxCoeff() < 1e-12);
    }
    SUBCASE("T = 0 returns the input, T counts one eval") {
        auto model = standard_model(3);
        Rng rng(8);
        Vec x = rng.normal_vec(3);
        CHECK((tweedie_denoise(x, 0, model, *s) - x).cwiseAbs().maxCoeff() == 0.0);
        EvalCounter counter;
        tweedie_denoise(x, 10, model, *s, &counter);
        CHECK(counter.score == 1);
    }
}

TEST_CASE("ddim reverse") {
    auto s = sched100();
    SUBCASE("deterministic") {
        Rng rng(9);
        auto gmm = random_diag_gmm(rng, 5, 3);
        GmmScoreModel model(gmm, s);
        Vec x = rng.normal_vec(5);
        Vec a = ddim_reverse(x, 80, model, *s, 20);
        Vec b = ddim_reverse(x, 80, model, *s, 20);
        CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("single step equals the tweedie denoiser") {
        Rng rng(10);
        auto model = gaussian_model(Vec::Constant(4, 0.5), 0.6);
        Vec x = rng.normal_vec(4);
        Vec a = ddim_reverse(x, 50, model, *s, 1);
        Vec b = tweedie_denoise(x, 50, model, *s);
        CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("gaussian prior trajectory matches the scalar affine recursion") {
        // For N(mu, v I) the update is affine with scalar coefficients; run
        // the recursion with scalars as an independent oracle.
        Vec mu = Vec::Constant(4, 0.8);
        const double v = 0.49;
        auto model = gaussian_model(mu, v);
        Rng rng(11);
        Vec x = rng.normal_vec(4);
        const int t_level = 60, n_steps = 7;

        double a_coef = 1.0, b_coef = 0.0; // x_t = a*x_T + b*mu
        int t_cur = t_level;
        for (int j = n_steps - 1; j >= 0; --j) {
            int t_next = int(std::floor(double(t_level) * double(j) / double(n_steps) + 0.5));
            double ab = s->alpha_bar(t_cur);
            double m = ab * v + (1.0 - ab);
            // x0_hat = (x - (1-ab)/m * (x - sqrt(ab) mu)) / sqrt(ab)
            double c_x = (1.0 - (1.0 - ab) / m) / std::sqrt(ab);
            double c_mu = (1.0 - ab) / m;
            // eps_hat = (x - sqrt(ab) x0_hat) / sqrt(1-ab)
            double ab_next = s->alpha_bar(t_next);
            double next_a, next_b;
            if (t_next == 0) {
                next_a = c_x;
                next_b = c_mu;
            } else {
                double e_x = (1.0 - std::sqrt(ab) * c_x) / std::sqrt(1.0 - ab);
                double e_mu = -std::sqrt(ab) * c_mu / std::sqrt(1.0 - ab);
                next_a = std::sqrt(ab_next) * c_x + std::sqrt(1.0 - ab_next) * e_x;
                next_b = std::sqrt(ab_next) * c_mu + std::sqrt(1.0 - ab_next) * e_mu;
            }
            double new_a = next_a * a_coef;
            double new_b = next_a * b_coef + next_b;
            a_coef = new_a;
            b_coef = new_b;
            t_cur = t_next;
        }
        Vec oracle = a_coef * x + b_coef * mu;
        Vec out = ddim_reverse(x, t_level, model, *s, n_steps);
        CHECK((out - oracle).cwiseAbs().maxCoeff() < 1e-12);
    }
    SUBCASE("NFE equals the sub-grid size") {
        auto model = standard_model(4);
        Rng rng(12);
        Vec x = rng.normal_vec(4);
        EvalCounter counter;
        ddim_reverse(x, 80, model, *s, 20, &counter);
        CHECK(counter.score == 20);
    }
    SUBCASE("invalid sub-grid rejected") {
        auto model = standard_model(4);
        Vec x = Vec::Zero(4);
        CHECK_THROWS_AS(ddim_reverse(x, 10, model, *s, 11), std::invalid_argument);
        CHECK_THROWS_AS(ddim_reverse(x, 10, model, *s, 0), std::invalid_argument);
    }
}

TEST_CASE("probability flow map") {
    auto s = sched100();
    SUBCASE("standard normal prior gives the identity map") {
        // score -x cancels the drift; only rounding in the marginal variance
        // (alpha_bar + (1 - alpha_bar)) can perturb the state
        auto model = standard_model(5);
        Rng rng(13);
        Vec x = rng.normal_vec(5);
        Vec out = flow_ode_map(x, 70, model, *s, 35);
        CHECK((out - x).cwiseAbs().maxCoeff() < 1e-12);
    }
    SUBCASE("gaussian prior matches the high-resolution scalar oracle") {
        // affine flow: integrate the scalar coefficient ODE at 200x resolution
        Vec mu = Vec::Constant(4, -0.6);
        const double v = 2.25;
        auto model = gaussian_model(mu, v);
        Rng rng(14);
        Vec x = rng.normal_vec(4);
        const int t_level = 60, n_steps = 60;

        // oracle: dx/dl = (x + score)/2 with score = -(x - e^{l/2} mu) / (e^l v + 1 - e^l)
        // -> da/dl and db/dl for x(l) = a x_T + b mu, integrated with RK4
        const int hi = n_steps * 200;
        double l = std::log(s->alpha_bar(t_level));
        const double h = -l / double(hi);
        double a = 1.0, b = 0.0;
        auto deriv = [&](double a_c, double b_c, double l_c, double& da, double& db) {
            double ab = std::exp(l_c);
            double m = ab * v + 1.0 - ab;
            double g = 0.5 * (1.0 - 1.0 / m);
            da = g * a_c;
            db = g * b_c + 0.5 * std::sqrt(ab) / m;
        };
        for (int i = 0; i < hi; ++i) {
            double k1a, k1b, k2a, k2b, k3a, k3b, k4a, k4b;
            deriv(a, b, l, k1a, k1b);
            deriv(a + 0.5 * h * k1a, b + 0.5 * h * k1b, l + 0.5 * h, k2a, k2b);
            deriv(a + 0.5 * h * k2a, b + 0.5 * h * k2b, l + 0.5 * h, k3a, k3b);
            deriv(a + h * k3a, b + h * k3b, l + h, k4a, k4b);
            a += h / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a);
            b += h / 6.0 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b);
            l += h;
        }
        Vec oracle = a * x + b * mu;
        Vec out = flow_ode_map(x, t_level, model, *s, n_steps);
        CHECK((out - oracle).cwiseAbs().maxCoeff() < 1e-4);
    }
    SUBCASE("deterministic and NFE = 4 per step") {
        Rng rng(15);
        auto gmm = random_diag_gmm(rng, 4, 2);
        GmmScoreModel model(gmm, s);
        Vec x = rng.normal_vec(4);
        EvalCounter counter;
        Vec a = flow_ode_map(x, 50, model, *s, 10, &counter);
        Vec b = flow_ode_map(x, 50, model, *s, 10);
        CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
        CHECK(counter.score == 40);
    }
}

TEST_CASE("dpur dispatch") {
    auto s = sched100();
    SUBCASE("T = 0 is the identity for every backend") {
        auto model = standard_model(4);
        Rng rng(16);
        Vec x = rng.normal_vec(4);
        for (auto backend : {PurifyBackend::ancestral(), PurifyBackend::ddim(5),
                             PurifyBackend::tweedie(), PurifyBackend::flow_ode(5)}) {
            Vec out = dpur(x, 0, backend, model, *s, 3u);
            CHECK((out - x).cwiseAbs().maxCoeff() == 0.0);
        }
    }
    SUBCASE("tweedie backend equals single-step ddim under the same seed") {
        Rng rng(17);
        auto gmm = random_diag_gmm(rng, 4, 2);
        GmmScoreModel model(gmm, s);
        Vec x = rng.normal_vec(4);
        Vec a = dpur(x, 30, PurifyBackend::tweedie(), model, *s, 11u);
        Vec b = dpur(x, 30, PurifyBackend::ddim(1), model, *s, 11u);
        CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("ddim sub-grid clamps to the purification level") {
        auto model = standard_model(4);
        Rng rng(18);
        Vec x = rng.normal_vec(4);
        EvalCounter counter;
        dpur(x, 5, PurifyBackend::ddim(20), model, *s, 2u, &counter);
        CHECK(counter.score == 5);
    }
    SUBCASE("deterministic per seed") {
        Rng rng(19);
        auto gmm = random_diag_gmm(rng, 4, 2);
        GmmScoreModel model(gmm, s);
        Vec x = rng.normal_vec(4);
        for (auto backend : {PurifyBackend::ancestral(), PurifyBackend::ddim(5),
                             PurifyBackend::tweedie(), PurifyBackend::flow_ode(5)}) {
            Vec a = dpur(x, 40, backend, model, *s, 21u);
            Vec b = dpur(x, 40, backend, model, *s, 21u);
            CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
        }
    }
    SUBCASE("all backends stay within the ancestral monte-carlo envelope") {
        // single Gaussian prior: the analytic denoising posterior mean is the
        // tweedie output; deterministic backends must sit no farther from it
        // than the ancestral spread
        Vec mu = Vec::Constant(6, 0.9);
        const double v = 0.36;
        auto model = gaussian_model(mu, v);
        const int t_level = 50;
        Rng rng(20);
        Vec x0 = model.prior().sample(rng);
        Vec x_t = forward_diffuse(x0, t_level, *s, 5u);
        Vec posterior_mean = tweedie_denoise(x_t, t_level, model, *s);

        double spread = 0.0;
        for (int i = 0; i < 64; ++i) {
            Rng chain(300 + std::uint64_t(i));
            Vec out = reverse_sde(x_t, t_level, model, *s, chain);
            spread = std::max(spread, (out - posterior_mean).norm());
        }
        for (auto backend : {PurifyBackend::ddim(20), PurifyBackend::tweedie(),
                             PurifyBackend::flow_ode(25)}) {
            Vec out;
            switch (backend.kind) {
                case PurifyBackend::Kind::Ddim:
                    out = ddim_reverse(x_t, t_level, model, *s, backend.n_steps);
                    break;
                case PurifyBackend::Kind::Tweedie:
                    out = tweedie_denoise(x_t, t_level, model, *s);
                    break;
                default:
                    out = flow_ode_map(x_t, t_level, model, *s, backend.n_steps);
            }
            CHECK((out - posterior_mean).norm() <= spread);
        }
    }
    SUBCASE("first-iteration purification moves the iterate toward the truth") {
        // inpainting toy: the data-fidelity output leaves the masked box at
        // its zero initialization; purification should fill it from the prior
        auto big = std::make_shared<const NoiseSchedule>(NoiseSchedule::vp_linear(1000, 1e-4, 0.02));
        auto prior = blob_prior(16, 0.05);
        GmmScoreModel model(prior, big);
        auto op = make_inpainting(ImageShape{16, 16, 1}, 5, 5, 6, 6);
        int improved = 0;
        const int seeds = 50;
        for (int seed = 0; seed < seeds; ++seed) {
            Rng rng(600 + seed);
            Vec truth = prior.sample(rng);
            auto y = measure(*op, truth, 0.0, 700 + seed);
            FidelityConfig fid{50, 0.18, 0.9, {}};
            Vec x1 = data_fidelity(*op, y.y, Vec::Zero(256), fid);
            Vec v1 = dpur(x1, 300, PurifyBackend::ddim(20), model, *big, 800 + seed);
            if ((v1 - truth).norm() < (x1 - truth).norm()) ++improved;
        }
        CHECK(improved >= int(0.8 * seeds));
    }
    SUBCASE("purify trace records levels and eval counts") {
        auto model = standard_model(3);
        Rng rng(22);
        Vec x = rng.normal_vec(3);
        EvalCounter counter;
        std::vector<PurifyTracePoint> trace;
        dpur(x, 10, PurifyBackend::ddim(5), model, *s, 4u, &counter, &trace);
        REQUIRE(trace.size() == 6);
        CHECK(trace.front().t == 10);
        CHECK(trace.back().t == 0);
        CHECK(trace.back().nfe == 5);

        auto path = (std::filesystem::temp_directory_path() / "dcdp_purify_trace.csv").string();
        write_purify_trace(path, trace);
        std::ifstream in(path);
        std::string header;
        std::getline(in, header);
        CHECK(header == "t,state_norm,nfe");
        int rows = 0;
        for (std::string line; std::getline(in, line);) ++rows;
        CHECK(rows == 6);
    }
}

TEST_SUITE_END();
