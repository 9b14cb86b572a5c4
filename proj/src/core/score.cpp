// SPDX-License-Identifier: Apache-2.0
#include "score.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dcdp {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;

double log_sum_exp(const std::vector<double>& v) {
    double m = *std::max_element(v.begin(), v.end());
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}
} // namespace

void GaussianMixture::finalize_weights() {
    double total = 0.0;
    for (double w : weights_) {
        if (!(w > 0.0)) throw std::invalid_argument("GaussianMixture: weights must be positive");
        total += w;
    }
    log_weights_.resize(weights_.size());
    for (std::size_t i = 0; i < weights_.size(); ++i) {
        weights_[i] /= total;
        log_weights_[i] = std::log(weights_[i]);
    }
}

GaussianMixture GaussianMixture::diagonal(Vec weights, std::vector<Vec> means, std::vector<Vec> diag_vars) {
    if (means.empty() || means.size() != diag_vars.size() || Eigen::Index(means.size()) != weights.size())
        throw std::invalid_argument("GaussianMixture: inconsistent component counts");
    GaussianMixture g;
    g.dim_ = int(means[0].size());
    g.diagonal_ = true;
    g.weights_.assign(weights.data(), weights.data() + weights.size());
    g.means_ = std::move(means);
    g.diag_vars_ = std::move(diag_vars);
    g.log_norm_.resize(g.weights_.size());
    for (std::size_t i = 0; i < g.weights_.size(); ++i) {
        if (g.means_[i].size() != g.dim_ || g.diag_vars_[i].size() != g.dim_)
            throw std::invalid_argument("GaussianMixture: component dimension mismatch");
        if ((g.diag_vars_[i].array() <= 0.0).any())
            throw std::invalid_argument("GaussianMixture: diagonal variances must be positive");
        g.log_norm_[i] = -0.5 * (g.dim_ * kLog2Pi + g.diag_vars_[i].array().log().sum());
    }
    g.finalize_weights();
    return g;
}

GaussianMixture GaussianMixture::full(Vec weights, std::vector<Vec> means, std::vector<Mat> covariances) {
    if (means.empty() || means.size() != covariances.size() || Eigen::Index(means.size()) != weights.size())
        throw std::invalid_argument("GaussianMixture: inconsistent component counts");
    GaussianMixture g;
    g.dim_ = int(means[0].size());
    g.diagonal_ = false;
    g.weights_.assign(weights.data(), weights.data() + weights.size());
    g.means_ = std::move(means);
    g.covs_ = std::move(covariances);
    g.chol_.resize(g.covs_.size());
    g.log_norm_.resize(g.weights_.size());
    for (std::size_t i = 0; i < g.weights_.size(); ++i) {
        if (g.means_[i].size() != g.dim_ || g.covs_[i].rows() != g.dim_ || g.covs_[i].cols() != g.dim_)
            throw std::invalid_argument("GaussianMixture: component dimension mismatch");
        double asym = (g.covs_[i] - g.covs_[i].transpose()).cwiseAbs().maxCoeff();
        if (asym > 1e-10 * (1.0 + g.covs_[i].cwiseAbs().maxCoeff()))
            throw std::invalid_argument("GaussianMixture: covariance not symmetric");
        g.covs_[i] = 0.5 * (g.covs_[i] + g.covs_[i].transpose().eval());
        g.chol_[i].compute(g.covs_[i]);
        if (g.chol_[i].info() != Eigen::Success)
            throw std::invalid_argument("GaussianMixture: covariance not positive definite");
        double logdet = 0.0;
        const Mat& L = g.chol_[i].matrixL();
        for (int j = 0; j < g.dim_; ++j) logdet += 2.0 * std::log(L(j, j));
        g.log_norm_[i] = -0.5 * (g.dim_ * kLog2Pi + logdet);
    }
    g.finalize_weights();
    return g;
}

GaussianMixture GaussianMixture::isotropic(std::vector<Vec> means, double variance) {
    if (means.empty()) throw std::invalid_argument("GaussianMixture: empty mean set");
    if (!(variance > 0.0)) throw std::invalid_argument("GaussianMixture: variance must be positive");
    const int d = int(means[0].size());
    const int m = int(means.size());
    Vec w = Vec::Constant(m, 1.0 / m);
    std::vector<Vec> vars(m, Vec::Constant(d, variance));
    return diagonal(w, std::move(means), std::move(vars));
}

void GaussianMixture::component_logs(const Vec& x, std::vector<double>& out) const {
    const int m = components();
    out.resize(m);
    if (diagonal_) {
        for (int i = 0; i < m; ++i) {
            double q = ((x - means_[i]).array().square() / diag_vars_[i].array()).sum();
            out[i] = log_weights_[i] + log_norm_[i] - 0.5 * q;
        }
    } else {
        for (int i = 0; i < m; ++i) {
            Vec d = x - means_[i];
            double q = d.dot(chol_[i].solve(d));
            out[i] = log_weights_[i] + log_norm_[i] - 0.5 * q;
        }
    }
}

double GaussianMixture::log_density(const Vec& x) const {
    if (x.size() != dim_) throw std::invalid_argument("GaussianMixture: dimension mismatch");
    std::vector<double> lp;
    component_logs(x, lp);
    return log_sum_exp(lp);
}

Vec GaussianMixture::score(const Vec& x) const {
    if (x.size() != dim_) throw std::invalid_argument("GaussianMixture: dimension mismatch");
    std::vector<double> lp;
    component_logs(x, lp);
    double lz = log_sum_exp(lp);
    Vec s = Vec::Zero(dim_);
    for (int i = 0; i < components(); ++i) {
        double r = std::exp(lp[i] - lz); // responsibility
        if (r == 0.0) continue;
        if (diagonal_)
            s += r * ((means_[i] - x).array() / diag_vars_[i].array()).matrix();
        else
            s += r * chol_[i].solve(means_[i] - x);
    }
    return s;
}

Mat GaussianMixture::score_jacobian(const Vec& x) const {
    // H = sum_i r_i (-P_i + g_i g_i^T) - s s^T,  g_i = P_i (mu_i - x)
    if (x.size() != dim_) throw std::invalid_argument("GaussianMixture: dimension mismatch");
    std::vector<double> lp;
    component_logs(x, lp);
    double lz = log_sum_exp(lp);
    Mat h = Mat::Zero(dim_, dim_);
    Vec s = Vec::Zero(dim_);
    for (int i = 0; i < components(); ++i) {
        double r = std::exp(lp[i] - lz);
        if (r == 0.0) continue;
        Vec g;
        if (diagonal_) {
            g = ((means_[i] - x).array() / diag_vars_[i].array()).matrix();
            h.diagonal() -= r * diag_vars_[i].cwiseInverse();
        } else {
            g = chol_[i].solve(means_[i] - x);
            h -= r * chol_[i].solve(Mat::Identity(dim_, dim_));
        }
        h += r * (g * g.transpose());
        s += r * g;
    }
    h -= s * s.transpose();
    return 0.5 * (h + h.transpose().eval());
}

Vec GaussianMixture::sample(Rng& rng) const {
    double u = rng.uniform();
    int pick = components() - 1;
    double acc = 0.0;
    for (int i = 0; i < components(); ++i) {
        acc += weights_[i];
        if (u <= acc) { pick = i; break; }
    }
    Vec eps = rng.normal_vec(dim_);
    if (diagonal_)
        return means_[pick] + diag_vars_[pick].cwiseSqrt().cwiseProduct(eps);
    Mat l = chol_[pick].matrixL();
    return means_[pick] + l * eps;
}

Vec GaussianMixture::mixture_mean() const {
    Vec m = Vec::Zero(dim_);
    for (int i = 0; i < components(); ++i) m += weights_[i] * means_[i];
    return m;
}

Mat GaussianMixture::mixture_covariance() const {
    Vec mu = mixture_mean();
    Mat c = Mat::Zero(dim_, dim_);
    for (int i = 0; i < components(); ++i) {
        Vec d = means_[i] - mu;
        c += weights_[i] * (d * d.transpose());
        if (diagonal_)
            c.diagonal() += weights_[i] * diag_vars_[i];
        else
            c += weights_[i] * covs_[i];
    }
    return c;
}

GaussianMixture GaussianMixture::vp_marginal(double alpha_bar) const {
    if (!(alpha_bar > 0.0) || alpha_bar > 1.0)
        throw std::invalid_argument("GaussianMixture: alpha_bar must be in (0, 1]");
    double sa = std::sqrt(alpha_bar);
    Vec w = Eigen::Map<const Vec>(weights_.data(), Eigen::Index(weights_.size()));
    std::vector<Vec> means(means_.size());
    for (std::size_t i = 0; i < means_.size(); ++i) means[i] = sa * means_[i];
    if (diagonal_) {
        std::vector<Vec> vars(diag_vars_.size());
        for (std::size_t i = 0; i < diag_vars_.size(); ++i)
            vars[i] = (alpha_bar * diag_vars_[i].array() + (1.0 - alpha_bar)).matrix();
        return diagonal(w, std::move(means), std::move(vars));
    }
    std::vector<Mat> covs(covs_.size());
    for (std::size_t i = 0; i < covs_.size(); ++i) {
        covs[i] = alpha_bar * covs_[i];
        covs[i].diagonal().array() += (1.0 - alpha_bar);
    }
    return full(w, std::move(means), std::move(covs));
}

GmmScoreModel::GmmScoreModel(GaussianMixture prior, std::shared_ptr<const NoiseSchedule> schedule)
    : prior_(std::move(prior)), schedule_(std::move(schedule)) {
    if (!schedule_) throw std::invalid_argument("GmmScoreModel: null schedule");
}

void GmmScoreModel::check_input(const Vec& x, int t) const {
    if (!x.allFinite()) throw std::invalid_argument("GmmScoreModel: non-finite input");
    if (t < 0 || t > schedule_->steps())
        throw std::out_of_range("GmmScoreModel: t outside 0..N");
}

double GmmScoreModel::log_density(const Vec& x, int t) const {
    check_input(x, t);
    if (t == 0) return prior_.log_density(x);
    return prior_.vp_marginal(schedule_->alpha_bar(t)).log_density(x);
}

Vec GmmScoreModel::score(const Vec& x, int t) const {
    check_input(x, t);
    if (t == 0) return prior_.score(x);
    return prior_.vp_marginal(schedule_->alpha_bar(t)).score(x);
}

Mat GmmScoreModel::score_jacobian(const Vec& x, int t) const {
    check_input(x, t);
    if (t == 0) return prior_.score_jacobian(x);
    return prior_.vp_marginal(schedule_->alpha_bar(t)).score_jacobian(x);
}

Vec GmmScoreModel::score_at_level(const Vec& x, double alpha_bar) const {
    if (!x.allFinite()) throw std::invalid_argument("GmmScoreModel: non-finite input");
    if (alpha_bar >= 1.0) return prior_.score(x);
    return prior_.vp_marginal(alpha_bar).score(x);
}

GaussianMixture empirical_prior(const std::vector<Vec>& dataset, double bandwidth) {
    if (dataset.empty()) throw std::invalid_argument("empirical_prior: empty dataset");
    if (!(bandwidth > 0.0)) throw std::invalid_argument("empirical_prior: bandwidth must be positive");
    return GaussianMixture::isotropic(dataset, bandwidth * bandwidth);
}

GaussianMixture load_gmm(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_gmm: cannot open " + path);
    int dim = -1, ncomp = -1;
    std::vector<double> weights;
    std::vector<Vec> means, vars;
    std::string line;
    int lineno = 0;
    auto fail = [&](const std::string& msg) {
        throw std::runtime_error("load_gmm: " + path + ":" + std::to_string(lineno) + ": " + msg);
    };
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::string key;
        if (!(ls >> key)) continue;
        if (key == "dim") {
            if (!(ls >> dim) || dim < 1) fail("bad dim");
        } else if (key == "components") {
            if (!(ls >> ncomp) || ncomp < 1) fail("bad components");
        } else if (key == "weight") {
            double w;
            if (!(ls >> w)) fail("bad weight");
            weights.push_back(w);
        } else if (key == "mean" || key == "var") {
            if (dim < 1) fail("dim must precede mean/var");
            Vec v(dim);
            for (int j = 0; j < dim; ++j)
                if (!(ls >> v[j])) fail("expected " + std::to_string(dim) + " values");
            (key == "mean" ? means : vars).push_back(std::move(v));
        } else {
            fail("unknown key '" + key + "'");
        }
    }
    if (dim < 1) throw std::runtime_error("load_gmm: " + path + ": missing dim");
    if (weights.empty() || weights.size() != means.size() || weights.size() != vars.size())
        throw std::runtime_error("load_gmm: " + path + ": weight/mean/var counts differ");
    if (ncomp >= 0 && std::size_t(ncomp) != weights.size())
        throw std::runtime_error("load_gmm: " + path + ": components count does not match entries");
    Vec w = Eigen::Map<const Vec>(weights.data(), Eigen::Index(weights.size()));
    return GaussianMixture::diagonal(w, std::move(means), std::move(vars));
}

void save_gmm(const GaussianMixture& gmm, const std::string& path) {
    if (!gmm.is_diagonal())
        throw std::invalid_argument("save_gmm: only diagonal mixtures are serializable");
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_gmm: cannot open " + path);
    out.precision(17);
    out << "dim " << gmm.dim() << "\n";
    out << "components " << gmm.components() << "\n";
    for (int i = 0; i < gmm.components(); ++i) {
        out << "weight " << gmm.weight(i) << "\n";
        out << "mean";
        for (int j = 0; j < gmm.dim(); ++j) out << ' ' << gmm.mean(i)[j];
        out << "\nvar";
        for (int j = 0; j < gmm.dim(); ++j) out << ' ' << gmm.diag_var(i)[j];
        out << "\n";
    }
}

} // namespace dcdp
