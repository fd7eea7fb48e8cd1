#include "cdm/sample.hpp"

#include <cmath>
#include <stdexcept>

namespace cdm {

std::string to_string(SamplerKind k) {
    switch (k) {
        case SamplerKind::Ddpm: return "ddpm";
        case SamplerKind::Ddim: return "ddim";
        case SamplerKind::OtEuler: return "ot_euler";
    }
    throw std::invalid_argument("unknown sampler kind");
}

SamplerKind sampler_kind_from_string(const std::string& s) {
    if (s == "ddpm") return SamplerKind::Ddpm;
    if (s == "ddim") return SamplerKind::Ddim;
    if (s == "ot_euler") return SamplerKind::OtEuler;
    throw std::invalid_argument("invalid sampler kind: " + s);
}

void SamplerConfig::validate(const NoiseSchedule& schedule) const {
    if (n_samples < 1) throw std::invalid_argument("sampler: n_samples must be >= 1");
    if (steps < 0 || steps > schedule.T())
        throw std::invalid_argument("sampler: steps must lie in 1..T");
    const bool vp = schedule.variance_preserving();
    if (sampler == SamplerKind::OtEuler && vp)
        throw std::invalid_argument("ot_euler requires an ot schedule");
    if (sampler != SamplerKind::OtEuler && !vp)
        throw std::invalid_argument(to_string(sampler) + " requires a variance-preserving schedule");
}

std::vector<int> ddim_stride(int T, int steps) {
    if (steps < 1 || steps > T) throw std::invalid_argument("ddim stride needs 1 <= steps <= T");
    std::vector<int> taus;
    if (steps == 1) return {T};
    for (int k = 0; k < steps; ++k) {
        int t = 1 + int(std::llround(double(k) * double(T - 1) / double(steps - 1)));
        if (taus.empty() || t != taus.back()) taus.push_back(t);
    }
    taus.back() = T;
    return taus;
}

namespace {

std::vector<Rng> make_streams(std::uint64_t seed, int n) {
    std::vector<Rng> streams;
    streams.reserve(size_t(n));
    for (int i = 0; i < n; ++i) streams.push_back(derived_rng(seed, std::uint64_t(i)));
    return streams;
}

Mat initial_noise(std::vector<Rng>& streams, int dim) {
    Mat x(dim, int(streams.size()));
    for (size_t j = 0; j < streams.size(); ++j) x.col(int(j)) = standard_normal(streams[j], dim);
    return x;
}

void check_finite(const Mat& x, int t) {
    if (!x.allFinite())
        throw std::runtime_error("non-finite sampler state at t = " + std::to_string(t));
}

}  // namespace

Mat ddpm_sample(const NoiseLevelModel& model, const SamplerConfig& config) {
    const NoiseSchedule& schedule = model.schedule();
    config.validate(schedule);
    const int d = model.dim();
    const int T = schedule.T();

    std::vector<Rng> streams = make_streams(config.seed, config.n_samples);
    Mat x = initial_noise(streams, d);
    for (int t = T; t >= 1; --t) {
        const double alpha = schedule.alpha(t);
        const double abar = schedule.alpha_bar(t);
        const double sigma = (t > 1) ? schedule.sigma(t, config.sigma) : 0.0;
        const Mat eps_hat = model.predict_eps_batch(x, t);
        x = (x - (1.0 - alpha) / std::sqrt(1.0 - abar) * eps_hat) / std::sqrt(alpha);
        if (t > 1)
            for (int j = 0; j < x.cols(); ++j)
                x.col(j) += sigma * standard_normal(streams[size_t(j)], d);
        check_finite(x, t);
    }
    return x;
}

Mat ddim_sample(const NoiseLevelModel& model, const SamplerConfig& config) {
    const NoiseSchedule& schedule = model.schedule();
    config.validate(schedule);
    const int T = schedule.T();
    const std::vector<int> taus = ddim_stride(T, config.steps == 0 ? T : config.steps);

    std::vector<Rng> streams = make_streams(config.seed, config.n_samples);
    Mat x = initial_noise(streams, model.dim());
    for (int k = int(taus.size()) - 1; k >= 0; --k) {
        const int t = taus[size_t(k)];
        const int t_prev = (k > 0) ? taus[size_t(k) - 1] : 0;
        const double abar = schedule.alpha_bar(t);
        const Mat eps_hat = model.predict_eps_batch(x, t);
        const Mat x0_hat = (x - std::sqrt(1.0 - abar) * eps_hat) / std::sqrt(abar);
        const double abar_prev = schedule.alpha_bar(t_prev);
        x = std::sqrt(abar_prev) * x0_hat + std::sqrt(1.0 - abar_prev) * eps_hat;
        check_finite(x, t);
    }
    return x;
}

Mat ot_euler_sample(const NoiseLevelModel& model, const SamplerConfig& config) {
    const NoiseSchedule& schedule = model.schedule();
    config.validate(schedule);
    const int T = schedule.T();
    const int steps = config.steps == 0 ? T : config.steps;

    // ascending integer grid 0 = g_0 < ... < g_steps = T; integration starts
    // one grid point below T (the prefactor is singular at t = T)
    std::vector<int> grid;
    for (int k = 0; k <= steps; ++k) {
        int t = int(std::llround(double(k) * double(T) / double(steps)));
        if (grid.empty() || t != grid.back()) grid.push_back(t);
    }

    std::vector<Rng> streams = make_streams(config.seed, config.n_samples);
    Mat x = initial_noise(streams, model.dim());
    for (int k = int(grid.size()) - 2; k >= 1; --k) {
        const int t = grid[size_t(k)];
        const int t_next = grid[size_t(k) - 1];
        // v_t(x) = (E[eps|x] - x) / (T - t)
        const Mat eps_hat = model.predict_eps_batch(x, t);
        const Mat v = (eps_hat - x) / double(T - t);
        x += double(t_next - t) * v;
        check_finite(x, t);
    }
    return x;
}

Mat generate_samples(const NoiseLevelModel& model, const SamplerConfig& config) {
    switch (config.sampler) {
        case SamplerKind::Ddpm: return ddpm_sample(model, config);
        case SamplerKind::Ddim: return ddim_sample(model, config);
        case SamplerKind::OtEuler: return ot_euler_sample(model, config);
    }
    throw std::invalid_argument("unknown sampler");
}

}  // namespace cdm
