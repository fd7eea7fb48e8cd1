#include "cdm/schedule.hpp"

#include <cmath>
#include <stdexcept>

namespace cdm {

std::string to_string(ScheduleKind kind) {
    switch (kind) {
        case ScheduleKind::DdpmLinear: return "ddpm_linear";
        case ScheduleKind::TreUniform: return "tre_uniform";
        case ScheduleKind::Ot: return "ot";
    }
    throw std::invalid_argument("unknown schedule kind");
}

ScheduleKind schedule_kind_from_string(const std::string& s) {
    if (s == "ddpm_linear") return ScheduleKind::DdpmLinear;
    if (s == "tre_uniform") return ScheduleKind::TreUniform;
    if (s == "ot") return ScheduleKind::Ot;
    throw std::invalid_argument("invalid schedule kind: " + s);
}

NoiseSchedule NoiseSchedule::build(ScheduleKind kind, int T, double beta_min, double beta_max) {
    ScheduleDescriptor desc;
    desc.kind = kind;
    desc.T = T;
    desc.beta_min = beta_min;
    desc.beta_max = beta_max;
    return build(desc);
}

NoiseSchedule NoiseSchedule::build(const ScheduleDescriptor& desc) {
    if (desc.T < 1) throw std::invalid_argument("schedule requires T >= 1");
    NoiseSchedule s;
    s.desc_ = desc;

    switch (desc.kind) {
        case ScheduleKind::DdpmLinear: {
            if (desc.beta_min < 0 || desc.beta_max >= 1 || desc.beta_min > desc.beta_max)
                throw std::invalid_argument("ddpm_linear requires 0 <= beta_min <= beta_max < 1");
            const int T = desc.T;
            s.num_classes_ = T + 2;
            s.alpha_bar_.assign(T + 2, 0.0);
            s.alpha_bar_[0] = 1.0;
            double prod = 1.0;
            double log_prod = 0.0;
            for (int t = 1; t <= T; ++t) {
                const double beta =
                    (T == 1) ? desc.beta_min
                             : desc.beta_min + (desc.beta_max - desc.beta_min) * (t - 1) / double(T - 1);
                prod *= 1.0 - beta;
                log_prod += std::log1p(-beta);
                // direct product cross-checked against the log-space accumulation
                if (std::abs(prod - std::exp(log_prod)) > 1e-12 * prod)
                    throw std::runtime_error("abar product disagrees with log-space evaluation");
                s.alpha_bar_[t] = prod;
            }
            s.alpha_bar_[T + 1] = 0.0;
            for (int t = 1; t <= T; ++t) {
                const bool strict = desc.beta_min > 0.0;
                if (s.alpha_bar_[t] > s.alpha_bar_[t - 1] ||
                    (strict && s.alpha_bar_[t] >= s.alpha_bar_[t - 1]))
                    throw std::runtime_error("non-monotone abar sequence (params bug)");
            }
            break;
        }
        case ScheduleKind::TreUniform: {
            const int T = desc.T;
            s.num_classes_ = T + 2;
            s.alpha_bar_.assign(T + 2, 0.0);
            for (int t = 0; t <= T + 1; ++t) {
                const double r = double(t) / double(T + 1);  // sqrt(1 - abar_t)
                s.alpha_bar_[t] = 1.0 - r * r;
            }
            s.alpha_bar_[0] = 1.0;
            s.alpha_bar_[T + 1] = 0.0;
            break;
        }
        case ScheduleKind::Ot: {
            // coefficient pair ((T-t)/T, t/T); no abar table
            s.num_classes_ = desc.T + 1;
            break;
        }
    }
    return s;
}

void NoiseSchedule::check_t(int t) const {
    if (t < 0 || t > noise_class_index())
        throw std::out_of_range("timestep " + std::to_string(t) + " outside {0,...," +
                                std::to_string(noise_class_index()) + "}");
}

double NoiseSchedule::alpha_bar(int t) const {
    if (desc_.kind == ScheduleKind::Ot)
        throw std::logic_error("alpha_bar is undefined for the ot schedule");
    check_t(t);
    return alpha_bar_[t];
}

double NoiseSchedule::alpha(int t) const {
    if (t < 1 || t > desc_.T)
        throw std::out_of_range("alpha_t defined for interior steps 1..T only");
    return alpha_bar(t) / alpha_bar(t - 1);
}

double NoiseSchedule::beta(int t) const { return 1.0 - alpha(t); }

double NoiseSchedule::sigma(int t, SigmaKind which) const {
    const double beta_t = beta(t);
    if (which == SigmaKind::Beta) return std::sqrt(beta_t);
    const double denom = 1.0 - alpha_bar(t);
    if (denom <= 0.0) return 0.0;
    return std::sqrt((1.0 - alpha_bar(t - 1)) / denom * beta_t);
}

double NoiseSchedule::signal_coef(int t) const {
    check_t(t);
    if (desc_.kind == ScheduleKind::Ot) return double(desc_.T - t) / double(desc_.T);
    return std::sqrt(alpha_bar_[t]);
}

double NoiseSchedule::noise_coef(int t) const {
    check_t(t);
    if (desc_.kind == ScheduleKind::Ot) return double(t) / double(desc_.T);
    return std::sqrt(1.0 - alpha_bar_[t]);
}

Vec forward_diffuse(const NoiseSchedule& schedule, const Vec& x0, int t, const Vec& eps) {
    if (eps.size() != x0.size())
        throw std::invalid_argument("forward_diffuse: eps/x0 dimension mismatch");
    return schedule.signal_coef(t) * x0 + schedule.noise_coef(t) * eps;
}

int sample_timestep(Rng& rng, const NoiseSchedule& schedule) {
    std::uniform_int_distribution<int> u(0, schedule.noise_class_index());
    return u(rng);
}

}  // namespace cdm
