#include "cdm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "cdm/schedule.hpp"

namespace cdm {

Vec denoising_mse_per_t(const NoiseLevelModel& model, const DataSource& data, int n_per_t,
                        Rng& rng) {
    if (n_per_t < 1) throw std::invalid_argument("denoising_mse_per_t: n_per_t >= 1 required");
    const NoiseSchedule& schedule = model.schedule();
    const int d = model.dim();
    const int T = schedule.T();
    Vec curve(T);
    for (int t = 1; t <= T; ++t) {
        const Mat x0 = data.draw_batch(rng, n_per_t);
        const Mat eps = standard_normal_mat(rng, d, n_per_t);
        Mat xt(d, n_per_t);
        for (int j = 0; j < n_per_t; ++j)
            xt.col(j) = forward_diffuse(schedule, x0.col(j), t, eps.col(j));
        const Mat eps_hat = model.predict_eps_batch(xt, t);
        curve(t - 1) = (eps_hat - eps).squaredNorm() / double(d) / double(n_per_t);
    }
    return curve;
}

namespace {

int argmax_class(const Vec& log_post) {
    int idx = 0;
    log_post.maxCoeff(&idx);
    return idx;
}

}  // namespace

Vec per_timestep_accuracy(const NoiseLevelModel& model, const DataSource& data, int n_per_t,
                          Rng& rng) {
    const NoiseSchedule& schedule = model.schedule();
    const int K = schedule.num_classes();
    Vec acc = Vec::Zero(K);
    for (int t = 0; t < K; ++t) {
        int hits = 0;
        for (int j = 0; j < n_per_t; ++j) {
            const Vec x0 = data.draw(rng);
            const Vec eps = standard_normal(rng, model.dim());
            const Vec xt = forward_diffuse(schedule, x0, t, eps);
            if (argmax_class(model.log_posterior(xt)) == t) ++hits;
        }
        acc(t) = double(hits) / double(n_per_t);
    }
    return acc;
}

Mat confusion_matrix(const NoiseLevelModel& model, const DataSource& data, int n_per_t, int n_bins,
                     Rng& rng) {
    const NoiseSchedule& schedule = model.schedule();
    const int K = schedule.num_classes();
    if (n_bins < 1 || n_bins > K) throw std::invalid_argument("confusion_matrix: bad bin count");
    auto bin_of = [&](int t) { return std::min(int(std::int64_t(t) * n_bins / K), n_bins - 1); };

    Mat counts = Mat::Zero(n_bins, n_bins);
    for (int t = 0; t < K; ++t) {
        for (int j = 0; j < n_per_t; ++j) {
            const Vec x0 = data.draw(rng);
            const Vec eps = standard_normal(rng, model.dim());
            const Vec xt = forward_diffuse(schedule, x0, t, eps);
            counts(bin_of(t), bin_of(argmax_class(model.log_posterior(xt)))) += 1.0;
        }
    }
    for (int i = 0; i < n_bins; ++i) {
        const double row = counts.row(i).sum();
        if (row > 0) counts.row(i) /= row;
    }
    return counts;
}

NllResult nll_of_points(const NoiseLevelModel& model, const Mat& points, int t,
                        double data_scale) {
    if (points.cols() == 0) throw std::invalid_argument("nll: empty point set");
    if (data_scale <= 0.0) throw std::invalid_argument("nll: data_scale must be positive");
    const int d = int(points.rows());
    const int noise_idx = model.schedule().noise_class_index();
    NllResult res;
    res.n = int(points.cols());
    double sum = 0.0, sumsq = 0.0;
    for (int j = 0; j < points.cols(); ++j) {
        const Vec x = points.col(j) / data_scale;
        const Vec lp = model.log_posterior(x);
        const double nats = lp(t) - lp(noise_idx) + log_std_normal(x);
        const double nll_pd = -nats / double(d) + std::log(data_scale);
        sum += nll_pd;
        sumsq += nll_pd * nll_pd;
    }
    res.mean_nats_per_dim = sum / res.n;
    res.mean_nats = res.mean_nats_per_dim * d;
    res.mean_bits_per_dim = res.mean_nats_per_dim / std::log(2.0);
    const double var = std::max(0.0, sumsq / res.n - res.mean_nats_per_dim * res.mean_nats_per_dim);
    res.stderr_nats_per_dim = std::sqrt(var / std::max(1, res.n - 1));
    return res;
}

NllResult nll_bits_per_dim(const NoiseLevelModel& model, const DataSource& data, int n, int t,
                           Rng& rng, double data_scale) {
    if (n < 1) throw std::invalid_argument("nll: n >= 1 required");
    const NoiseSchedule& schedule = model.schedule();
    Mat pts(model.dim(), n);
    if (t == 0) {
        pts = data.draw_batch(rng, n);
    } else {
        // diffusion happens in the model's standardized space
        for (int j = 0; j < n; ++j) {
            const Vec x0 = data.draw(rng) / data_scale;
            const Vec eps = standard_normal(rng, model.dim());
            pts.col(j) = data_scale * forward_diffuse(schedule, x0, t, eps);
        }
    }
    return nll_of_points(model, pts, t, data_scale);
}

ClassificationMetrics classification_metrics(const NoiseLevelModel& model, const DataSource& data,
                                             int n, Rng& rng) {
    if (n < 1) throw std::invalid_argument("classification_metrics: n >= 1 required");
    const NoiseSchedule& schedule = model.schedule();
    ClassificationMetrics m;
    for (int j = 0; j < n; ++j) {
        const int t = sample_timestep(rng, schedule);
        const Vec x0 = data.draw(rng);
        const Vec eps = standard_normal(rng, model.dim());
        const Vec xt = forward_diffuse(schedule, x0, t, eps);
        const Vec lp = model.log_posterior(xt);
        m.mean_ce -= lp(t);
        if (argmax_class(lp) == t) m.accuracy += 1.0;
    }
    m.mean_ce /= n;
    m.accuracy /= n;
    return m;
}

namespace {

inline double col_distance(const double* x, const double* y, int d) {
    double s = 0.0;
    for (int i = 0; i < d; ++i) {
        const double diff = x[i] - y[i];
        s += diff * diff;
    }
    return std::sqrt(s);
}

// unordered pair-distance sum within an index subset of the pooled matrix
double subset_pair_sum(const Mat& pooled, const std::vector<int>& idx, int count) {
    const int d = int(pooled.rows());
    const double* base = pooled.data();
    double s = 0.0;
    for (int i = 0; i < count; ++i) {
        const double* xi = base + std::ptrdiff_t(idx[size_t(i)]) * d;
        for (int j = i + 1; j < count; ++j)
            s += col_distance(xi, base + std::ptrdiff_t(idx[size_t(j)]) * d, d);
    }
    return s;
}

double cross_pair_sum(const Mat& a, const Mat& b) {
    const int d = int(a.rows());
    double s = 0.0;
    for (int i = 0; i < a.cols(); ++i) {
        const double* xi = a.data() + std::ptrdiff_t(i) * d;
        for (int j = 0; j < b.cols(); ++j)
            s += col_distance(xi, b.data() + std::ptrdiff_t(j) * d, d);
    }
    return s;
}

// within-set sum over all ordered pairs; matches the cross_pair_sum loop order
// so ed(A, A) cancels to exactly zero
double self_pair_sum_ordered(const Mat& a) {
    const int d = int(a.rows());
    double s = 0.0;
    for (int i = 0; i < a.cols(); ++i) {
        const double* xi = a.data() + std::ptrdiff_t(i) * d;
        for (int j = 0; j < a.cols(); ++j)
            s += col_distance(xi, a.data() + std::ptrdiff_t(j) * d, d);
    }
    return s;
}

double energy_from_sums(double aa, double bb, double ab, double n, double m) {
    // V-statistic normalization; aa/bb are unordered within-set sums
    return 2.0 * ab / (n * m) - 2.0 * aa / (n * n) - 2.0 * bb / (m * m);
}

}  // namespace

double energy_distance(const Mat& a, const Mat& b) {
    if (a.rows() != b.rows()) throw std::invalid_argument("energy_distance: dimension mismatch");
    if (a.cols() == 0 || b.cols() == 0) throw std::invalid_argument("energy_distance: empty set");
    const double n = double(a.cols());
    const double m = double(b.cols());
    // averaging the two cross orders and grouping the within terms keeps the
    // result bitwise symmetric in (a, b) and exactly zero for identical sets
    const double cross = 0.5 * (cross_pair_sum(a, b) + cross_pair_sum(b, a));
    const double wa = self_pair_sum_ordered(a) / (n * n);
    const double wb = self_pair_sum_ordered(b) / (m * m);
    return 2.0 * (cross / (n * m)) - (wa + wb);
}

PermutationTest energy_permutation_test(const Mat& a, const Mat& b, int shuffles,
                                        std::uint64_t seed) {
    PermutationTest res;
    res.shuffles = shuffles;
    res.statistic = energy_distance(a, b);

    const int n = int(a.cols());
    const int m = int(b.cols());
    const int N = n + m;
    Mat pooled(a.rows(), N);
    pooled << a, b;

    // Only the within-smaller-set sum is recomputed per shuffle; the other two
    // sums follow from precomputed per-point totals and the pooled grand sum.
    Vec row_sum = Vec::Zero(N);
    double grand = 0.0;
    {
        const int d = int(pooled.rows());
        const double* base = pooled.data();
        for (int i = 0; i < N; ++i) {
            const double* xi = base + std::ptrdiff_t(i) * d;
            for (int j = i + 1; j < N; ++j) {
                const double dist = col_distance(xi, base + std::ptrdiff_t(j) * d, d);
                row_sum(i) += dist;
                row_sum(j) += dist;
                grand += dist;
            }
        }
    }

    const bool a_smaller = n <= m;
    const int small = a_smaller ? n : m;
    std::vector<int> idx(static_cast<size_t>(N));
    std::iota(idx.begin(), idx.end(), 0);

    int at_least = 0;
    for (int s = 0; s < shuffles; ++s) {
        Rng rng = derived_rng(seed, std::uint64_t(s));
        std::shuffle(idx.begin(), idx.end(), rng);
        const double within_small = subset_pair_sum(pooled, idx, small);
        double small_rows = 0.0;
        for (int i = 0; i < small; ++i) small_rows += row_sum(idx[size_t(i)]);
        const double cross = small_rows - 2.0 * within_small;
        const double within_large = grand - within_small - cross;
        const double aa = a_smaller ? within_small : within_large;
        const double bb = a_smaller ? within_large : within_small;
        if (energy_from_sums(aa, bb, cross, double(n), double(m)) >= res.statistic) ++at_least;
    }
    res.p_value = (1.0 + at_least) / (1.0 + shuffles);
    return res;
}

}  // namespace cdm
