#pragma once

#include <string>
#include <vector>

#include "cdm/types.hpp"

namespace cdm {

enum class ScheduleKind { DdpmLinear, TreUniform, Ot };

std::string to_string(ScheduleKind kind);
ScheduleKind schedule_kind_from_string(const std::string& s);

// Sigma choice for DDPM reverse steps: sigma_t^2 = beta_t, or the posterior
// variance beta_tilde_t = (1 - abar_{t-1}) / (1 - abar_t) * beta_t.
enum class SigmaKind { Beta, PosteriorBeta };

struct ScheduleDescriptor {
    ScheduleKind kind = ScheduleKind::DdpmLinear;
    int T = 1000;
    double beta_min = 1e-4;  // used by ddpm_linear only
    double beta_max = 0.02;
};

// Noise schedule over augmented timesteps.
//
// Variance-preserving kinds (ddpm_linear, tre_uniform) store abar over
// t = 0..T+1 with abar_0 = 1 and abar_{T+1} = 0 exactly; num_classes = T+2.
// The ot kind is the linear interpolation x_t = ((T-t)/T) x0 + (t/T) eps over
// t = 0..T; num_classes = T+1 and the pure-noise class is T.
//
// Immutable after construction; safe for concurrent reads.
class NoiseSchedule {
  public:
    static NoiseSchedule build(const ScheduleDescriptor& desc);
    static NoiseSchedule build(ScheduleKind kind, int T,
                               double beta_min = 1e-4, double beta_max = 0.02);

    ScheduleKind kind() const { return desc_.kind; }
    int T() const { return desc_.T; }
    int num_classes() const { return num_classes_; }
    int noise_class_index() const { return num_classes_ - 1; }
    const ScheduleDescriptor& descriptor() const { return desc_; }
    bool variance_preserving() const { return desc_.kind != ScheduleKind::Ot; }

    // abar_t; variance-preserving kinds only.
    double alpha_bar(int t) const;
    // alpha_t = abar_t / abar_{t-1} and beta_t = 1 - alpha_t, defined for
    // interior steps t = 1..T only (never at the sentinels).
    double alpha(int t) const;
    double beta(int t) const;
    double sigma(int t, SigmaKind which = SigmaKind::Beta) const;

    // Coefficients of x_t = signal_coef(t) * x0 + noise_coef(t) * eps,
    // valid for every kind (sqrt(abar), sqrt(1-abar) when variance-preserving).
    double signal_coef(int t) const;
    double noise_coef(int t) const;

  private:
    NoiseSchedule() = default;
    void check_t(int t) const;

    ScheduleDescriptor desc_;
    int num_classes_ = 0;
    std::vector<double> alpha_bar_;  // empty for ot
};

// x_t = signal_coef(t) * x0 + noise_coef(t) * eps
Vec forward_diffuse(const NoiseSchedule& schedule, const Vec& x0, int t, const Vec& eps);

// t ~ U{0, ..., noise_class_index}
int sample_timestep(Rng& rng, const NoiseSchedule& schedule);

}  // namespace cdm
