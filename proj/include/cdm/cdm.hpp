#pragma once

#include "cdm/model.hpp"
#include "cdm/net.hpp"
#include "cdm/schedule.hpp"
#include "cdm/types.hpp"

namespace cdm {

struct DenoisingOutput {
    Vec eps_hat;     // predicted noise
    Vec x0_hat;      // implied clean-signal estimate
    double F_value;  // logits[noise_idx] - logits[t]
};

// eps_hat = noise_coef(t) * (grad_x F(x,t) + x); t = 0 gives eps_hat = 0.
DenoisingOutput denoise_eps(const ClassifierNet& net, const NoiseSchedule& schedule,
                            const Vec& x, int t);

// x_{t-1} = sqrt(alpha_t) x - ((1-alpha_t)/sqrt(alpha_t)) grad_x F + sigma_t z
Vec reverse_step(const ClassifierNet& net, const NoiseSchedule& schedule, const Vec& x, int t,
                 const Vec& z, double sigma_t);

struct LogLikelihood {
    double nats = 0.0;
    double bits_per_dim = 0.0;
};

// Single-forward-pass exact log density of x under p_{x_t} (p_t uniform).
LogLikelihood log_likelihood(const ClassifierNet& net, const NoiseSchedule& schedule,
                             const Vec& x, int t);

// OT velocity field; schedule.kind must be ot and t < T.
Vec vector_field_ot(const ClassifierNet& net, const NoiseSchedule& schedule, const Vec& x, int t);

// Trained classifier viewed through the model interface used by eval/sample.
class ClassifierModel : public NoiseLevelModel {
  public:
    ClassifierModel(const ClassifierNet& net, const NoiseSchedule& schedule)
        : net_(&net), schedule_(schedule) {}
    int dim() const override { return net_->input_dim(); }
    const NoiseSchedule& schedule() const override { return schedule_; }
    Vec log_posterior(const Vec& x) const override { return log_softmax(net_->forward_logits(x)); }
    Vec predict_eps(const Vec& x, int t) const override {
        return denoise_eps(*net_, schedule_, x, t).eps_hat;
    }
    Mat predict_eps_batch(const Mat& x, int t) const override;
    const ClassifierNet& net() const { return *net_; }

  private:
    const ClassifierNet* net_;
    NoiseSchedule schedule_;
};

}  // namespace cdm
