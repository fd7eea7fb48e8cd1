#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cdm/net.hpp"
#include "cdm/oracle.hpp"
#include "cdm/schedule.hpp"
#include "cdm/types.hpp"

namespace cdm {

// Source of clean training vectors x0.
class DataSource {
  public:
    virtual ~DataSource() = default;
    virtual int dim() const = 0;
    virtual Vec draw(Rng& rng) const = 0;
    Mat draw_batch(Rng& rng, int n) const;
};

class GmmSource : public DataSource {
  public:
    explicit GmmSource(GmmDensity gmm) : gmm_(std::move(gmm)) {}
    int dim() const override { return gmm_.dim(); }
    Vec draw(Rng& rng) const override { return gmm_.sample(rng); }
    const GmmDensity& density() const { return gmm_; }

  private:
    GmmDensity gmm_;
};

class UniformBoxSource : public DataSource {
  public:
    explicit UniformBoxSource(UniformBoxDensity box) : box_(box) {}
    int dim() const override { return box_.dim; }
    Vec draw(Rng& rng) const override { return box_.sample(rng); }
    const UniformBoxDensity& density() const { return box_; }

  private:
    UniformBoxDensity box_;
};

// Flat numeric records, one vector per CSV row.
class FileSource : public DataSource {
  public:
    explicit FileSource(const std::string& path);
    int dim() const override { return dim_; }
    Vec draw(Rng& rng) const override;
    int size() const { return int(rows_.size()); }
    const Vec& row(int i) const { return rows_[std::size_t(i)]; }
    // all records as columns
    Mat points() const;

  private:
    int dim_ = 0;
    std::vector<Vec> rows_;
};

// View of another source with every draw divided by a fixed scale.
class ScaledSource : public DataSource {
  public:
    ScaledSource(const DataSource& inner, double scale) : inner_(&inner), scale_(scale) {}
    int dim() const override { return inner_->dim(); }
    Vec draw(Rng& rng) const override { return inner_->draw(rng) / scale_; }
    double scale() const { return scale_; }

  private:
    const DataSource* inner_;
    double scale_;
};

// sqrt of the average per-dimension variance over n draws
double estimate_scale(const DataSource& data, int n, Rng& rng);

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class AdamOptimizer {
  public:
    AdamOptimizer(const ClassifierNet& net, AdamConfig cfg);
    void update(ClassifierNet& net, const GradBuffers& grads, double lr_scale = 1.0);
    const AdamConfig& config() const { return cfg_; }

  private:
    AdamConfig cfg_;
    GradBuffers m_, v_;
    long step_ = 0;
};

class EmaState {
  public:
    EmaState(const ClassifierNet& net, double decay);
    void update(const ClassifierNet& net);
    double decay() const { return decay_; }
    const std::vector<double>& params() const { return params_; }
    // copy of the net with EMA parameters loaded
    ClassifierNet snapshot(const ClassifierNet& net) const;

  private:
    double decay_;
    std::vector<double> params_;
};

struct TrainConfig {
    double w_ce = 0.001;
    int steps = 1000;
    int batch_size = 128;
    AdamConfig adam;
    double ema_decay = 0.9999;
    // cosine-decay the learning rate from adam.lr to adam.lr * final_lr_fraction
    double final_lr_fraction = 1.0;
    // rescale training data to unit average variance; the estimated scale is
    // recorded in TrainResult::data_scale and raw-space likelihoods follow by
    // the change of variables log p(x) = log p_model(x/s) - d log s
    bool standardize = false;
    std::uint64_t seed = 0;
    LossMode loss_mode = LossMode::Both;
    int log_every = 100;
    ScheduleDescriptor schedule;
    NetConfig net;  // num_classes filled from the schedule when 0

    void validate() const;
};

struct StepMetrics {
    int step = 0;
    double ce = 0.0;
    double mse = 0.0;
    double loss = 0.0;
    double acc = 0.0;
    double wall_ms = 0.0;
};

struct TrainReport {
    std::vector<StepMetrics> rows;  // one per log interval, strictly increasing step
    double total_wall_ms = 0.0;
    void write_csv(const std::string& path) const;
};

struct TrainResult {
    ClassifierNet net;        // raw parameters
    ClassifierNet ema_net;    // EMA parameters
    NoiseSchedule schedule;
    TrainReport report;
    double data_scale = 1.0;  // divisor applied to training data (1 unless standardize)
};

// One Algorithm-1 step over a batch of clean vectors.
StepMetrics train_step(ClassifierNet& net, AdamOptimizer& opt, EmaState& ema, const Mat& x0,
                       const NoiseSchedule& schedule, const TrainConfig& config, Rng& rng,
                       GradBuffers& scratch, int step_index);

TrainResult train(const TrainConfig& config, const DataSource& data, Rng& rng);

}  // namespace cdm
