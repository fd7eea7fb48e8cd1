#include "cdm/oracle.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace cdm {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

double logsumexp(const Vec& v) {
    const double m = v.maxCoeff();
    if (!std::isfinite(m)) return m;
    return std::log((v.array() - m).exp().sum()) + m;
}

}  // namespace

GmmDensity GmmDensity::create(std::vector<double> weights, std::vector<Vec> means,
                              std::vector<Mat> covs) {
    const size_t K = weights.size();
    if (K == 0 || means.size() != K || covs.size() != K)
        throw std::invalid_argument("gmm: component count mismatch");
    const int d = int(means[0].size());
    double wsum = 0.0;
    for (double w : weights) {
        if (!(w > 0.0)) throw std::invalid_argument("gmm: weights must be positive");
        wsum += w;
    }
    GmmDensity g;
    for (size_t k = 0; k < K; ++k) {
        if (int(means[k].size()) != d || covs[k].rows() != d || covs[k].cols() != d)
            throw std::invalid_argument("gmm: dimension mismatch");
        if (!covs[k].isApprox(covs[k].transpose(), 1e-10))
            throw std::invalid_argument("gmm: covariance not symmetric");
        Eigen::LLT<Mat> llt(covs[k]);
        if (llt.info() != Eigen::Success)
            throw std::invalid_argument("gmm: covariance not positive-definite");
        const Mat L = llt.matrixL();
        double log_det = 0.0;
        for (int i = 0; i < d; ++i) log_det += 2.0 * std::log(L(i, i));
        g.chol_.push_back(L);
        g.prec_.push_back(llt.solve(Mat::Identity(d, d)));
        g.log_norm_.push_back(-0.5 * (d * kLog2Pi + log_det));
        g.weights_.push_back(weights[k] / wsum);
    }
    g.means_ = std::move(means);
    g.covs_ = std::move(covs);
    return g;
}

GmmDensity GmmDensity::single(const Vec& mean, const Mat& cov) {
    return create({1.0}, {mean}, {cov});
}

GmmDensity GmmDensity::standard_normal(int dim) {
    return single(Vec::Zero(dim), Mat::Identity(dim, dim));
}

double GmmDensity::logpdf(const Vec& x) const {
    if (int(x.size()) != dim()) throw std::invalid_argument("gmm logpdf: dimension mismatch");
    Vec lg(components());
    for (int k = 0; k < components(); ++k) {
        const Vec r = x - means_[k];
        lg(k) = std::log(weights_[k]) + log_norm_[k] - 0.5 * r.dot(prec_[k] * r);
    }
    return logsumexp(lg);
}

Vec GmmDensity::score(const Vec& x) const {
    Vec lg(components());
    std::vector<Vec> comp_grad(components());
    for (int k = 0; k < components(); ++k) {
        const Vec r = x - means_[k];
        const Vec pr = prec_[k] * r;
        lg(k) = std::log(weights_[k]) + log_norm_[k] - 0.5 * r.dot(pr);
        comp_grad[k] = -pr;
    }
    const double lse = logsumexp(lg);
    Vec g = Vec::Zero(dim());
    for (int k = 0; k < components(); ++k) g += std::exp(lg(k) - lse) * comp_grad[k];
    return g;
}

Vec GmmDensity::sample(Rng& rng) const {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    double u = u01(rng);
    int k = components() - 1;
    double acc = 0.0;
    for (int i = 0; i < components(); ++i) {
        acc += weights_[i];
        if (u <= acc) { k = i; break; }
    }
    return means_[k] + chol_[k] * cdm::standard_normal(rng, dim());
}

GmmDensity diffused_gmm(const GmmDensity& gmm, const NoiseSchedule& schedule, int t) {
    const int d = gmm.dim();
    if (t == schedule.noise_class_index())
        return GmmDensity::standard_normal(d);
    const double a = schedule.signal_coef(t);
    const double s = schedule.noise_coef(t);
    std::vector<Vec> means;
    std::vector<Mat> covs;
    for (int k = 0; k < gmm.components(); ++k) {
        means.push_back(a * gmm.means()[k]);
        covs.push_back(a * a * gmm.covs()[k] + s * s * Mat::Identity(d, d));
    }
    return GmmDensity::create(gmm.weights(), std::move(means), std::move(covs));
}

GmmOracle::GmmOracle(GmmDensity gmm, const NoiseSchedule& schedule, Vec log_prior)
    : gmm_(std::move(gmm)), schedule_(schedule) {
    const int K = schedule.num_classes();
    if (log_prior.size() == 0) {
        log_prior_ = Vec::Constant(K, -std::log(double(K)));
    } else {
        if (int(log_prior.size()) != K)
            throw std::invalid_argument("log_prior size must equal num_classes");
        log_prior_ = log_prior.array() - logsumexp(log_prior);
    }
    diffused_.reserve(size_t(K));
    for (int t = 0; t < K; ++t) diffused_.push_back(diffused_gmm(gmm_, schedule_, t));
}

Vec GmmOracle::log_posterior(const Vec& x) const {
    const int K = schedule_.num_classes();
    Vec lp(K);
    for (int t = 0; t < K; ++t) lp(t) = log_prior_(t) + diffused_[size_t(t)].logpdf(x);
    return lp.array() - logsumexp(lp);
}

Vec GmmOracle::posterior(const Vec& x) const { return log_posterior(x).array().exp(); }

Vec GmmOracle::denoiser(const Vec& x, int t) const {
    if (t < 1 || t > schedule_.noise_class_index())
        throw std::out_of_range("oracle denoiser defined for t >= 1 only");
    return -schedule_.noise_coef(t) * diffused_[size_t(t)].score(x);
}

Vec GmmOracle::grad_F(const Vec& x, int t) const {
    const int noise = schedule_.noise_class_index();
    return diffused_[size_t(noise)].score(x) - diffused_[size_t(t)].score(x);
}

Vec GmmOracle::grad_F_fd(const Vec& x, int t, double h) const {
    const int noise = schedule_.noise_class_index();
    Vec g(x.size());
    Vec xp = x, xm = x;
    for (int i = 0; i < x.size(); ++i) {
        xp(i) = x(i) + h;
        xm(i) = x(i) - h;
        const Vec lp = log_posterior(xp);
        const Vec lm = log_posterior(xm);
        g(i) = ((lp(noise) - lp(t)) - (lm(noise) - lm(t))) / (2.0 * h);
        xp(i) = x(i);
        xm(i) = x(i);
    }
    return g;
}

double GmmOracle::log_likelihood(const Vec& x, int t) const {
    const int noise = schedule_.noise_class_index();
    const Vec lp = log_posterior(x);
    return log_prior_(noise) - log_prior_(t) + lp(t) - lp(noise) + log_std_normal(x);
}

double verify_theorem1(const GmmOracle& oracle, const Mat& points, const std::vector<int>& ts,
                       bool analytic_grad, double fd_step) {
    if (points.cols() == 0) throw std::invalid_argument("verify_theorem1: no points");
    double worst = 0.0;
    for (int j = 0; j < points.cols(); ++j) {
        const Vec x = points.col(j);
        for (int t : ts) {
            const Vec grad = analytic_grad ? oracle.grad_F(x, t) : oracle.grad_F_fd(x, t, fd_step);
            const Vec lhs = oracle.schedule().noise_coef(t) * (grad + x);
            const Vec rhs = oracle.denoiser(x, t);
            const double rel = (lhs - rhs).norm() / std::max(rhs.norm(), 1.0);
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

double verify_theorem2(const GmmOracle& oracle, const Mat& points, const std::vector<int>& ts) {
    if (points.cols() == 0) throw std::invalid_argument("verify_theorem2: no points");
    double worst = 0.0;
    for (int j = 0; j < points.cols(); ++j) {
        const Vec x = points.col(j);
        for (int t : ts) {
            const double lhs = oracle.log_likelihood(x, t);
            const double rhs = oracle.diffused(t).logpdf(x);
            const double rel = std::abs(lhs - rhs) / std::max(std::abs(rhs), 1.0);
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

double verify_tweedie(const GmmOracle& oracle, const Mat& points, const std::vector<int>& ts,
                      double fd_step) {
    double worst = 0.0;
    for (int j = 0; j < points.cols(); ++j) {
        for (int t : ts) {
            const GmmDensity& density = oracle.diffused(t);
            const Vec x = points.col(j);
            const Vec analytic = density.score(x);
            Vec fd(x.size());
            Vec xp = x, xm = x;
            for (int i = 0; i < x.size(); ++i) {
                xp(i) = x(i) + fd_step;
                xm(i) = x(i) - fd_step;
                fd(i) = (density.logpdf(xp) - density.logpdf(xm)) / (2.0 * fd_step);
                xp(i) = x(i);
                xm(i) = x(i);
            }
            const double rel = (analytic - fd).norm() / std::max(analytic.norm(), 1.0);
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

double UniformBoxDensity::logpdf(const Vec& x, bool* inside) const {
    if (!(gamma > 0.0)) throw std::invalid_argument("uniform box requires gamma > 0");
    bool in = int(x.size()) == dim;
    for (int i = 0; i < x.size() && in; ++i)
        in = x(i) >= -gamma / 2.0 && x(i) <= gamma / 2.0;
    if (inside) *inside = in;
    if (!in) return -std::numeric_limits<double>::infinity();
    return -dim * std::log(gamma);
}

Vec UniformBoxDensity::sample(Rng& rng) const {
    std::uniform_real_distribution<double> u(-gamma / 2.0, gamma / 2.0);
    Vec x(dim);
    for (int i = 0; i < dim; ++i) x(i) = u(rng);
    return x;
}

Vec OracleModel::predict_eps(const Vec& x, int t) const {
    if (t == 0) return Vec::Zero(x.size());  // eps_theta(x_0, 0) = 0
    return oracle_->denoiser(x, t);
}

Mat random_spd(int dim, Rng& rng, double ridge) {
    Mat a = standard_normal_mat(rng, dim, dim) / std::sqrt(double(dim));
    return a * a.transpose() + ridge * Mat::Identity(dim, dim);
}

}  // namespace cdm
