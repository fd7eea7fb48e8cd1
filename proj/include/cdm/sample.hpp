#pragma once

#include <string>
#include <vector>

#include "cdm/model.hpp"
#include "cdm/schedule.hpp"
#include "cdm/types.hpp"

namespace cdm {

enum class SamplerKind { Ddpm, Ddim, OtEuler };
std::string to_string(SamplerKind k);
SamplerKind sampler_kind_from_string(const std::string& s);

struct SamplerConfig {
    SamplerKind sampler = SamplerKind::Ddpm;
    int steps = 0;  // 0 = full grid; sub-sampled count for ddim/ot_euler
    int n_samples = 1;
    std::uint64_t seed = 0;
    SigmaKind sigma = SigmaKind::Beta;

    void validate(const NoiseSchedule& schedule) const;
};

// Uniform subsampling of {1..T} including both endpoints, ascending.
std::vector<int> ddim_stride(int T, int steps);

// Algorithm-2 ancestral sampling; columns are samples. Trajectories use
// per-sample RNG streams derived from the seed, so results do not depend on
// batch composition.
Mat ddpm_sample(const NoiseLevelModel& model, const SamplerConfig& config);

// Deterministic DDIM (eta = 0) over a strided timestep subset.
Mat ddim_sample(const NoiseLevelModel& model, const SamplerConfig& config);

// Euler integration of the OT velocity field from t = T(1 - 1/steps) to 0.
Mat ot_euler_sample(const NoiseLevelModel& model, const SamplerConfig& config);

Mat generate_samples(const NoiseLevelModel& model, const SamplerConfig& config);

}  // namespace cdm
