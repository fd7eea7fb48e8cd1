#pragma once

#include "cdm/schedule.hpp"
#include "cdm/types.hpp"

namespace cdm {

// Common surface for anything that behaves like a noise-level classifier:
// the trained network, or the closed-form oracle substituted in its place.
class NoiseLevelModel {
  public:
    virtual ~NoiseLevelModel() = default;
    virtual int dim() const = 0;
    virtual const NoiseSchedule& schedule() const = 0;
    // normalized log p(t|x) over all classes
    virtual Vec log_posterior(const Vec& x) const = 0;
    // E[eps_t | x_t = x] (its approximation)
    virtual Vec predict_eps(const Vec& x, int t) const = 0;
    virtual Mat predict_eps_batch(const Mat& x, int t) const {
        Mat out(x.rows(), x.cols());
        for (int j = 0; j < x.cols(); ++j) out.col(j) = predict_eps(x.col(j), t);
        return out;
    }
};

}  // namespace cdm
