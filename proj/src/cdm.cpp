#include "cdm/cdm.hpp"

#include <cmath>
#include <stdexcept>

namespace cdm {

DenoisingOutput denoise_eps(const ClassifierNet& net, const NoiseSchedule& schedule,
                            const Vec& x, int t) {
    if (t < 0 || t > schedule.noise_class_index())
        throw std::out_of_range("denoise_eps: t out of range");
    Tape tape;
    const Mat grad = net.input_gradient_batch(x, {t}, tape);
    const int noise_idx = schedule.noise_class_index();
    DenoisingOutput out;
    out.F_value = tape.logits(noise_idx, 0) - tape.logits(t, 0);
    const double s = schedule.noise_coef(t);
    out.eps_hat = s * (grad.col(0) + x);
    const double a = schedule.signal_coef(t);
    out.x0_hat = (a > 0.0) ? Vec((x - s * out.eps_hat) / a) : Vec::Zero(x.size());
    return out;
}

Vec reverse_step(const ClassifierNet& net, const NoiseSchedule& schedule, const Vec& x, int t,
                 const Vec& z, double sigma_t) {
    if (t < 1 || t > schedule.T())
        throw std::out_of_range("reverse_step: t must lie in 1..T");
    const double alpha = schedule.alpha(t);
    const Vec grad = net.input_gradient(x, t);
    return std::sqrt(alpha) * x - (1.0 - alpha) / std::sqrt(alpha) * grad + sigma_t * z;
}

LogLikelihood log_likelihood(const ClassifierNet& net, const NoiseSchedule& schedule,
                             const Vec& x, int t) {
    if (t < 0 || t > schedule.noise_class_index())
        throw std::out_of_range("log_likelihood: t out of range");
    // exactly one forward pass; uniform p_t makes the prior ratio 1
    const Vec lsm = log_softmax(net.forward_logits(x));
    LogLikelihood ll;
    ll.nats = lsm(t) - lsm(schedule.noise_class_index()) + log_std_normal(x);
    ll.bits_per_dim = -ll.nats / (double(x.size()) * std::log(2.0));
    return ll;
}

Vec vector_field_ot(const ClassifierNet& net, const NoiseSchedule& schedule, const Vec& x, int t) {
    if (schedule.kind() != ScheduleKind::Ot)
        throw std::invalid_argument("vector_field_ot requires an ot schedule");
    const int T = schedule.T();
    if (t < 0 || t >= T)
        throw std::out_of_range("vector_field_ot: t = T is singular; need 0 <= t < T");
    const double ratio = double(t) / double(T);
    const double prefactor = ratio / (double(T) * (1.0 - ratio));
    const Vec grad = net.input_gradient(x, t);
    return prefactor * grad - x / double(T);
}

Mat ClassifierModel::predict_eps_batch(const Mat& x, int t) const {
    const std::vector<int> ts(size_t(x.cols()), t);
    const Mat grad = net_->input_gradient_batch(x, ts);
    return schedule_.noise_coef(t) * (grad + x);
}

}  // namespace cdm
