#pragma once

#include <memory>
#include <vector>

#include "cdm/model.hpp"
#include "cdm/schedule.hpp"
#include "cdm/types.hpp"

namespace cdm {

// Gaussian mixture with full covariances and closed-form diffusion,
// posterior, denoiser and likelihood. Immutable after construction.
class GmmDensity {
  public:
    static GmmDensity create(std::vector<double> weights, std::vector<Vec> means,
                             std::vector<Mat> covs);
    static GmmDensity single(const Vec& mean, const Mat& cov);
    static GmmDensity standard_normal(int dim);

    int dim() const { return means_.empty() ? 0 : int(means_[0].size()); }
    int components() const { return int(weights_.size()); }
    const std::vector<double>& weights() const { return weights_; }
    const std::vector<Vec>& means() const { return means_; }
    const std::vector<Mat>& covs() const { return covs_; }

    double logpdf(const Vec& x) const;
    // analytic gradient of logpdf
    Vec score(const Vec& x) const;
    Vec sample(Rng& rng) const;

  private:
    GmmDensity() = default;
    std::vector<double> weights_;
    std::vector<Vec> means_;
    std::vector<Mat> covs_;
    // per-component triangular factor, inverse-covariance and log normalizer
    std::vector<Mat> chol_;
    std::vector<Mat> prec_;
    std::vector<double> log_norm_;
};

// Exact density of x_t when x_0 ~ gmm: means scaled by signal_coef(t),
// covariances signal^2 * Sigma + noise^2 * I. At the pure-noise class the
// result is the single component N(0, I) regardless of gmm.
GmmDensity diffused_gmm(const GmmDensity& gmm, const NoiseSchedule& schedule, int t);

// Caches the diffused density of every class for repeated posterior queries.
class GmmOracle {
  public:
    // log_prior: log p_t over classes; defaults to uniform.
    GmmOracle(GmmDensity gmm, const NoiseSchedule& schedule, Vec log_prior = Vec());

    const NoiseSchedule& schedule() const { return schedule_; }
    const GmmDensity& data_density() const { return gmm_; }
    const GmmDensity& diffused(int t) const { return diffused_[size_t(t)]; }
    const Vec& log_prior() const { return log_prior_; }

    Vec log_posterior(const Vec& x) const;  // normalized log p(t|x)
    Vec posterior(const Vec& x) const;
    // E[eps_t | x_t = x] = -noise_coef(t) * score_t(x); t >= 1
    Vec denoiser(const Vec& x, int t) const;
    // analytic gradient of F(x,t) = log p(T+1|x) - log p(t|x)
    Vec grad_F(const Vec& x, int t) const;
    // finite-difference gradient of F built from log_posterior alone
    Vec grad_F_fd(const Vec& x, int t, double h = 1e-5) const;
    // Eq.-10 route to the log density of x_t (prior-ratio factor included)
    double log_likelihood(const Vec& x, int t) const;

  private:
    GmmDensity gmm_;
    NoiseSchedule schedule_;
    Vec log_prior_;
    std::vector<GmmDensity> diffused_;
};

// Numerical verifiers: worst relative discrepancy over points x timesteps.
double verify_theorem1(const GmmOracle& oracle, const Mat& points, const std::vector<int>& ts,
                       bool analytic_grad = true, double fd_step = 1e-5);
double verify_theorem2(const GmmOracle& oracle, const Mat& points, const std::vector<int>& ts);
// analytic mixture score vs central finite differences of the diffused log density
double verify_tweedie(const GmmOracle& oracle, const Mat& points, const std::vector<int>& ts,
                      double fd_step = 1e-6);

struct UniformBoxDensity {
    double gamma = 1.0;
    int dim = 1;
    // -d ln(gamma) inside the box; outside is flagged and -inf returned
    double logpdf(const Vec& x, bool* inside = nullptr) const;
    Vec sample(Rng& rng) const;
};

// Oracle standing in for a trained classifier.
class OracleModel : public NoiseLevelModel {
  public:
    explicit OracleModel(std::shared_ptr<const GmmOracle> oracle) : oracle_(std::move(oracle)) {}
    int dim() const override { return oracle_->data_density().dim(); }
    const NoiseSchedule& schedule() const override { return oracle_->schedule(); }
    Vec log_posterior(const Vec& x) const override { return oracle_->log_posterior(x); }
    Vec predict_eps(const Vec& x, int t) const override;

  private:
    std::shared_ptr<const GmmOracle> oracle_;
};

// Utility for synthetic SPD covariances in tests and configs.
Mat random_spd(int dim, Rng& rng, double ridge = 0.1);

}  // namespace cdm
