#include <doctest.h>

#include <cmath>

#include "cdm/cdm.hpp"
#include "cdm/oracle.hpp"

using namespace cdm;

namespace {

ClassifierNet small_net(const NoiseSchedule& s, int d, std::uint64_t seed) {
    NetConfig cfg;
    cfg.input_dim = d;
    cfg.hidden = {12, 12};
    cfg.num_classes = s.num_classes();
    ClassifierNet net = ClassifierNet::init(cfg, seed);
    Rng rng(seed + 1);
    std::normal_distribution<double> n01(0.0, 1.0);
    for (auto& w : net.weights())
        for (int i = 0; i < w.size(); ++i) w.data()[i] += 0.2 * n01(rng);
    return net;
}

}  // namespace

TEST_CASE("denoise_eps endpoints and x0_hat consistency") {
    const NoiseSchedule s = NoiseSchedule::build(ScheduleKind::DdpmLinear, 20);
    const ClassifierNet net = small_net(s, 3, 1);
    Rng rng(2);
    const Vec x = standard_normal(rng, 3);
    CHECK(denoise_eps(net, s, x, 0).eps_hat.cwiseAbs().maxCoeff() == 0.0);
    for (int t : {1, 10, 20}) {
        const DenoisingOutput out = denoise_eps(net, s, x, t);
        const Vec rebuilt = s.signal_coef(t) * out.x0_hat + s.noise_coef(t) * out.eps_hat;
        CHECK((rebuilt - x).cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("reverse step matches the denoiser-substitution form") {
    const NoiseSchedule s = NoiseSchedule::build(ScheduleKind::DdpmLinear, 20);
    const ClassifierNet net = small_net(s, 3, 3);
    Rng rng(4);
    for (int trial = 0; trial < 5; ++trial) {
        const Vec x = standard_normal(rng, 3);
        const Vec z = standard_normal(rng, 3);
        for (int t : {1, 7, 20}) {
            const double sigma = s.sigma(t);
            const Vec lhs = reverse_step(net, s, x, t, z, sigma);
            const DenoisingOutput d = denoise_eps(net, s, x, t);
            const Vec rhs =
                (x - (1.0 - s.alpha(t)) / s.noise_coef(t) * d.eps_hat) / std::sqrt(s.alpha(t)) +
                sigma * z;
            CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-10);
        }
    }
}

TEST_CASE("zero noise-rate reverse step is the identity") {
    const NoiseSchedule s = NoiseSchedule::build(ScheduleKind::DdpmLinear, 5, 0.0, 0.0);
    const ClassifierNet net = small_net(s, 2, 5);
    Rng rng(6);
    const Vec x = standard_normal(rng, 2);
    const Vec out = reverse_step(net, s, x, 3, Vec::Zero(2), 0.0);
    CHECK((out - x).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("likelihood at the pure-noise class is the Gaussian reference") {
    const NoiseSchedule s = NoiseSchedule::build(ScheduleKind::DdpmLinear, 20);
    const ClassifierNet net = small_net(s, 4, 7);
    Rng rng(8);
    const Vec x = standard_normal(rng, 4);
    const LogLikelihood ll = log_likelihood(net, s, x, s.noise_class_index());
    CHECK(ll.nats == doctest::Approx(log_std_normal(x)).epsilon(1e-12));
    CHECK(ll.bits_per_dim == doctest::Approx(-ll.nats / (4.0 * std::log(2.0))).epsilon(1e-12));
}

TEST_CASE("likelihood uses exactly one forward pass") {
    const NoiseSchedule s = NoiseSchedule::build(ScheduleKind::DdpmLinear, 20);
    const ClassifierNet net = small_net(s, 4, 9);
    Rng rng(10);
    const Vec x = standard_normal(rng, 4);
    net.reset_counters();
    log_likelihood(net, s, x, 0);
    CHECK(net.forward_count() == 1);
    CHECK(net.gradient_count() == 0);
}

TEST_CASE("ot vector field identities") {
    const NoiseSchedule s = NoiseSchedule::build(ScheduleKind::Ot, 50);
    const ClassifierNet net = small_net(s, 3, 11);
    Rng rng(12);
    const Vec x = standard_normal(rng, 3);

    CHECK((vector_field_ot(net, s, x, 0) + x / 50.0).cwiseAbs().maxCoeff() <= 1e-14);
    CHECK_THROWS(vector_field_ot(net, s, x, 50));

    // v_t(x) = (eps_hat - x) / (T - t)
    for (int t : {1, 10, 30, 49}) {
        const Vec v = vector_field_ot(net, s, x, t);
        const Vec eps_hat = denoise_eps(net, s, x, t).eps_hat;
        const Vec expect = (eps_hat - x) / double(50 - t);
        CHECK((v - expect).cwiseAbs().maxCoeff() <= 1e-10);
    }
}

TEST_CASE("classifier model batches agree with per-point evaluation") {
    const NoiseSchedule s = NoiseSchedule::build(ScheduleKind::DdpmLinear, 15);
    const ClassifierNet net = small_net(s, 2, 13);
    const ClassifierModel model(net, s);
    Rng rng(14);
    const Mat x = standard_normal_mat(rng, 2, 6);
    const Mat batch = model.predict_eps_batch(x, 7);
    for (int j = 0; j < 6; ++j)
        CHECK((batch.col(j) - model.predict_eps(x.col(j), 7)).cwiseAbs().maxCoeff() <= 1e-12);
}
