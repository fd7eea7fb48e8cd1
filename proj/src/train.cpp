#include "cdm/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cdm {

Mat DataSource::draw_batch(Rng& rng, int n) const {
    Mat out(dim(), n);
    for (int j = 0; j < n; ++j) out.col(j) = draw(rng);
    return out;
}

FileSource::FileSource(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open data file: " + path);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> vals;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
        Vec v(int(vals.size()));
        for (size_t i = 0; i < vals.size(); ++i) v(int(i)) = vals[i];
        if (dim_ == 0) dim_ = int(v.size());
        if (int(v.size()) != dim_)
            throw std::runtime_error("ragged record in data file: " + path);
        rows_.push_back(std::move(v));
    }
    if (rows_.empty()) throw std::runtime_error("empty data file: " + path);
}

Vec FileSource::draw(Rng& rng) const {
    std::uniform_int_distribution<size_t> u(0, rows_.size() - 1);
    return rows_[u(rng)];
}

Mat FileSource::points() const {
    Mat out(dim_, int(rows_.size()));
    for (int j = 0; j < out.cols(); ++j) out.col(j) = rows_[std::size_t(j)];
    return out;
}

AdamOptimizer::AdamOptimizer(const ClassifierNet& net, AdamConfig cfg)
    : cfg_(cfg), m_(net.zero_grads()), v_(net.zero_grads()) {}

void AdamOptimizer::update(ClassifierNet& net, const GradBuffers& grads, double lr_scale) {
    ++step_;
    const double lr = cfg_.lr * lr_scale;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, double(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, double(step_));
    auto& W = net.weights();
    auto& b = net.biases();
    for (size_t i = 0; i < W.size(); ++i) {
        m_.dW[i] = cfg_.beta1 * m_.dW[i] + (1.0 - cfg_.beta1) * grads.dW[i];
        v_.dW[i] = cfg_.beta2 * v_.dW[i] + (1.0 - cfg_.beta2) * grads.dW[i].cwiseAbs2();
        W[i].array() -=
            lr * (m_.dW[i].array() / bc1) / ((v_.dW[i].array() / bc2).sqrt() + cfg_.eps);
    }
    for (size_t i = 0; i < b.size(); ++i) {
        m_.db[i] = cfg_.beta1 * m_.db[i] + (1.0 - cfg_.beta1) * grads.db[i];
        v_.db[i] = cfg_.beta2 * v_.db[i] + (1.0 - cfg_.beta2) * grads.db[i].cwiseAbs2();
        b[i].array() -=
            lr * (m_.db[i].array() / bc1) / ((v_.db[i].array() / bc2).sqrt() + cfg_.eps);
    }
}

EmaState::EmaState(const ClassifierNet& net, double decay)
    : decay_(decay), params_(net.flatten_params()) {
    if (decay < 0.0 || decay >= 1.0) throw std::invalid_argument("ema decay must be in [0,1)");
}

void EmaState::update(const ClassifierNet& net) {
    const std::vector<double> p = net.flatten_params();
    for (size_t i = 0; i < params_.size(); ++i)
        params_[i] = decay_ * params_[i] + (1.0 - decay_) * p[i];
}

ClassifierNet EmaState::snapshot(const ClassifierNet& net) const {
    ClassifierNet copy = net;
    copy.load_params(params_);
    return copy;
}

void TrainConfig::validate() const {
    if (steps < 1) throw std::invalid_argument("train config: steps must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
    if (w_ce < 0.0) throw std::invalid_argument("train config: w_ce must be nonnegative");
    if (ema_decay < 0.0 || ema_decay >= 1.0)
        throw std::invalid_argument("train config: ema_decay must be in [0,1)");
    if (final_lr_fraction < 0.0 || final_lr_fraction > 1.0)
        throw std::invalid_argument("train config: final_lr_fraction must be in [0,1]");
}

void TrainReport::write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write metrics csv: " + path);
    out << "step,ce,mse,loss,acc,wall_ms\n";
    for (const auto& r : rows)
        out << r.step << ',' << r.ce << ',' << r.mse << ',' << r.loss << ',' << r.acc << ','
            << r.wall_ms << '\n';
}

StepMetrics train_step(ClassifierNet& net, AdamOptimizer& opt, EmaState& ema, const Mat& x0,
                       const NoiseSchedule& schedule, const TrainConfig& config, Rng& rng,
                       GradBuffers& scratch, int step_index) {
    const int B = int(x0.cols());
    const int d = int(x0.rows());
    Batch batch;
    batch.x0 = x0;
    batch.t.resize(size_t(B));
    batch.eps = standard_normal_mat(rng, d, B);
    batch.xt.resize(d, B);
    for (int j = 0; j < B; ++j) {
        batch.t[size_t(j)] = sample_timestep(rng, schedule);
        batch.xt.col(j) = forward_diffuse(schedule, x0.col(j), batch.t[size_t(j)], batch.eps.col(j));
    }

    StepMetrics m;
    m.step = step_index;
    const auto start = std::chrono::steady_clock::now();
    LossTerms terms;
    try {
        terms = net.loss_and_param_grads(batch, schedule, config.w_ce, config.loss_mode, scratch);
    } catch (const std::runtime_error& e) {
        // report the offending timestep histogram alongside the failure
        std::ostringstream hist;
        hist << "step " << step_index << ": " << e.what() << "; t histogram:";
        std::vector<int> counts(size_t(schedule.num_classes()), 0);
        for (int t : batch.t) counts[size_t(t)]++;
        for (int t = 0; t < schedule.num_classes(); ++t)
            if (counts[size_t(t)] > 0) hist << ' ' << t << 'x' << counts[size_t(t)];
        throw std::runtime_error(hist.str());
    }
    const double frac = config.final_lr_fraction;
    const double lr_scale =
        frac + (1.0 - frac) * 0.5 * (1.0 + std::cos(M_PI * double(step_index - 1) / double(config.steps)));
    opt.update(net, scratch, lr_scale);
    ema.update(net);
    const auto end = std::chrono::steady_clock::now();

    m.ce = terms.ce;
    m.mse = terms.mse;
    m.loss = terms.total;
    m.acc = terms.acc;
    m.wall_ms = std::chrono::duration<double, std::milli>(end - start).count();
    return m;
}

double estimate_scale(const DataSource& data, int n, Rng& rng) {
    if (n < 2) throw std::invalid_argument("estimate_scale: n >= 2 required");
    const Mat x = data.draw_batch(rng, n);
    const Vec mean = x.rowwise().mean();
    const double var = (x.colwise() - mean).array().square().mean();
    return std::max(std::sqrt(var), 1e-12);
}

TrainResult train(const TrainConfig& config, const DataSource& raw_data, Rng& rng) {
    config.validate();
    const double data_scale =
        config.standardize ? estimate_scale(raw_data, 4096, rng) : 1.0;
    const ScaledSource data(raw_data, data_scale);
    NoiseSchedule schedule = NoiseSchedule::build(config.schedule);
    NetConfig net_cfg = config.net;
    net_cfg.input_dim = data.dim();
    if (net_cfg.num_classes == 0) net_cfg.num_classes = schedule.num_classes();
    if (net_cfg.num_classes != schedule.num_classes())
        throw std::invalid_argument("net num_classes does not match schedule");

    ClassifierNet net = ClassifierNet::init(net_cfg, config.seed);
    AdamOptimizer opt(net, config.adam);
    EmaState ema(net, config.ema_decay);
    GradBuffers scratch = net.zero_grads();

    TrainReport report;
    const auto t0 = std::chrono::steady_clock::now();
    double ce_acc = 0, mse_acc = 0, loss_acc = 0, acc_acc = 0, wall_acc = 0;
    int acc_n = 0;
    for (int step = 1; step <= config.steps; ++step) {
        const Mat x0 = data.draw_batch(rng, config.batch_size);
        const StepMetrics m = train_step(net, opt, ema, x0, schedule, config, rng, scratch, step);
        ce_acc += m.ce; mse_acc += m.mse; loss_acc += m.loss; acc_acc += m.acc;
        wall_acc += m.wall_ms;
        ++acc_n;
        if (step % config.log_every == 0 || step == config.steps) {
            StepMetrics row;
            row.step = step;
            row.ce = ce_acc / acc_n;
            row.mse = mse_acc / acc_n;
            row.loss = loss_acc / acc_n;
            row.acc = acc_acc / acc_n;
            row.wall_ms = wall_acc;
            if (!report.rows.empty() && row.step <= report.rows.back().step)
                throw std::logic_error("metric rows must be strictly increasing in step");
            report.rows.push_back(row);
            ce_acc = mse_acc = loss_acc = acc_acc = wall_acc = 0;
            acc_n = 0;
        }
    }
    report.total_wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

    TrainResult result{std::move(net), ClassifierNet::init(net_cfg, config.seed), schedule,
                       std::move(report), data_scale};
    result.ema_net = ema.snapshot(result.net);
    return result;
}

}  // namespace cdm
