#pragma once

#include <vector>

#include "cdm/model.hpp"
#include "cdm/train.hpp"
#include "cdm/types.hpp"

namespace cdm {

// Mean per-coordinate noise-prediction MSE for each t in 1..T.
Vec denoising_mse_per_t(const NoiseLevelModel& model, const DataSource& data, int n_per_t,
                        Rng& rng);

// Row-stochastic matrix of P(predicted bin | true bin) from argmax
// predictions; bins are `n_bins` contiguous ranges covering {0..noise_idx}.
Mat confusion_matrix(const NoiseLevelModel& model, const DataSource& data, int n_per_t, int n_bins,
                     Rng& rng);

// Per-timestep argmax accuracy over t = 0..noise_idx (App. E.2-style profile).
Vec per_timestep_accuracy(const NoiseLevelModel& model, const DataSource& data, int n_per_t,
                          Rng& rng);

struct NllResult {
    double mean_nats = 0.0;          // mean log-likelihood is -mean_nats
    double mean_nats_per_dim = 0.0;  // negative normalized log-likelihood
    double mean_bits_per_dim = 0.0;
    double stderr_nats_per_dim = 0.0;
    int n = 0;
};

// Mean NLL of fresh draws from `data` under the single-NFE likelihood at
// timestep t (default 0 = clean data). data_scale is the divisor the model
// was trained under; raw-space densities follow by change of variables.
NllResult nll_bits_per_dim(const NoiseLevelModel& model, const DataSource& data, int n, int t,
                           Rng& rng, double data_scale = 1.0);
// Same, over the columns of a fixed raw-space point set.
NllResult nll_of_points(const NoiseLevelModel& model, const Mat& points, int t,
                        double data_scale = 1.0);

struct ClassificationMetrics {
    double accuracy = 0.0;
    double mean_ce = 0.0;
};

ClassificationMetrics classification_metrics(const NoiseLevelModel& model, const DataSource& data,
                                             int n, Rng& rng);

// Energy distance 2 E|a-b| - E|a-a'| - E|b-b'| (V-statistic; exactly 0 for
// identical point sets). Columns are samples.
double energy_distance(const Mat& a, const Mat& b);

struct PermutationTest {
    double statistic = 0.0;
    double p_value = 0.0;
    int shuffles = 0;
};

// Label-permutation null for the energy distance.
PermutationTest energy_permutation_test(const Mat& a, const Mat& b, int shuffles,
                                        std::uint64_t seed);

}  // namespace cdm
