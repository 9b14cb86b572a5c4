// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "rng.hpp"
#include "schedule.hpp"

#include <memory>
#include <string>
#include <vector>

namespace dcdp {

// Finite Gaussian mixture with diagonal or full SPD covariances.
// All density work happens in log space with a max-shift, so log_density
// is finite for every finite input.
class GaussianMixture {
public:
    static GaussianMixture diagonal(Vec weights, std::vector<Vec> means, std::vector<Vec> diag_vars);
    static GaussianMixture full(Vec weights, std::vector<Vec> means, std::vector<Mat> covariances);
    // Uniform weights, one isotropic component of the given variance per mean.
    static GaussianMixture isotropic(std::vector<Vec> means, double variance);

    int dim() const { return dim_; }
    int components() const { return int(weights_.size()); }
    bool is_diagonal() const { return diagonal_; }

    double weight(int i) const { return weights_[i]; }
    const Vec& mean(int i) const { return means_[i]; }
    const Vec& diag_var(int i) const { return diag_vars_[i]; }
    const Mat& covariance(int i) const { return covs_[i]; }

    double log_density(const Vec& x) const;
    Vec score(const Vec& x) const;      // grad_x log p(x)
    Mat score_jacobian(const Vec& x) const; // Hessian of log p(x), symmetric

    Vec sample(Rng& rng) const;

    // Mixture moments.
    Vec mixture_mean() const;
    Mat mixture_covariance() const;

    // Exact marginal of x_t = sqrt(ab) x_0 + sqrt(1-ab) eps for x_0 ~ this:
    // means scale by sqrt(ab), covariances become ab*Sigma + (1-ab)*I.
    GaussianMixture vp_marginal(double alpha_bar) const;

private:
    GaussianMixture() = default;
    void finalize_weights();

    int dim_ = 0;
    bool diagonal_ = true;
    std::vector<double> weights_;
    std::vector<double> log_weights_;
    std::vector<Vec> means_;
    std::vector<Vec> diag_vars_;                 // diagonal path
    std::vector<Mat> covs_;                      // full path
    std::vector<Eigen::LLT<Mat>> chol_;          // full path factorizations
    std::vector<double> log_norm_;               // -0.5*logdet(2*pi*Sigma)

    // per-component log N_i(x) + log w_i
    void component_logs(const Vec& x, std::vector<double>& out) const;
};

// Evaluatable score model on the discrete time grid. Implementations must be
// immutable and safe to share across threads; all evaluations are pure.
// A learned-network adapter would implement this same interface (quantizing
// alpha_bar_at queries to its training grid); only analytic models ship here.
class ScoreModel {
public:
    virtual ~ScoreModel() = default;
    virtual int dim() const = 0;
    virtual double log_density(const Vec& x, int t) const = 0;
    virtual Vec score(const Vec& x, int t) const = 0;
    virtual Mat score_jacobian(const Vec& x, int t) const = 0;
    // Evaluation at an arbitrary noise level alpha_bar in (0, 1]; used by the
    // probability-flow integrator between grid points.
    virtual Vec score_at_level(const Vec& x, double alpha_bar) const = 0;
    virtual const NoiseSchedule& schedule() const = 0;
};

// Analytic score of a GMM prior pushed through the VP forward process.
class GmmScoreModel final : public ScoreModel {
public:
    GmmScoreModel(GaussianMixture prior, std::shared_ptr<const NoiseSchedule> schedule);

    int dim() const override { return prior_.dim(); }
    double log_density(const Vec& x, int t) const override;
    Vec score(const Vec& x, int t) const override;
    Mat score_jacobian(const Vec& x, int t) const override;
    Vec score_at_level(const Vec& x, double alpha_bar) const override;
    const NoiseSchedule& schedule() const override { return *schedule_; }

    const GaussianMixture& prior() const { return prior_; }

private:
    void check_input(const Vec& x, int t) const;
    GaussianMixture prior_;
    std::shared_ptr<const NoiseSchedule> schedule_;
};

// Kernel-density prior: one isotropic Gaussian of variance bandwidth^2 per
// data point, uniform weights.
GaussianMixture empirical_prior(const std::vector<Vec>& dataset, double bandwidth);

// Plain-text GMM spec: "dim", "components", then per component
// "weight", "mean", "var" lines (diagonal variances). '#' starts a comment.
GaussianMixture load_gmm(const std::string& path);
void save_gmm(const GaussianMixture& gmm, const std::string& path);

} // namespace dcdp
