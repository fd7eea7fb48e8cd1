#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "cdm/oracle.hpp"
#include "cdm/train.hpp"

using namespace cdm;

namespace {

GmmDensity toy_gmm() {
    Vec m1(2), m2(2);
    m1 << -1.5, 0.0;
    m2 << 1.5, 0.0;
    const Mat cov = 0.3 * Mat::Identity(2, 2);
    return GmmDensity::create({0.5, 0.5}, {m1, m2}, {cov, cov});
}

TrainConfig toy_config() {
    TrainConfig cfg;
    cfg.schedule = {ScheduleKind::DdpmLinear, 20, 1e-4, 0.02};
    cfg.net.input_dim = 2;
    cfg.net.hidden = {16, 16};
    cfg.steps = 60;
    cfg.batch_size = 32;
    cfg.w_ce = 0.1;
    cfg.seed = 7;
    cfg.log_every = 20;
    return cfg;
}

}  // namespace

TEST_CASE("training is deterministic under a fixed seed") {
    const GmmSource data(toy_gmm());
    const TrainConfig cfg = toy_config();
    Rng r1(1), r2(1);
    const TrainResult a = train(cfg, data, r1);
    const TrainResult b = train(cfg, data, r2);
    const auto pa = a.net.flatten_params(), pb = b.net.flatten_params();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i] == pb[i]);
    const auto ea = a.ema_net.flatten_params(), eb = b.ema_net.flatten_params();
    for (std::size_t i = 0; i < ea.size(); ++i) CHECK(ea[i] == eb[i]);
}

TEST_CASE("config validation rejects degenerate settings") {
    TrainConfig cfg = toy_config();
    cfg.steps = 0;
    CHECK_THROWS(cfg.validate());
    cfg = toy_config();
    cfg.batch_size = 0;
    CHECK_THROWS(cfg.validate());
    cfg = toy_config();
    cfg.ema_decay = 1.0;
    CHECK_THROWS(cfg.validate());
}

TEST_CASE("training CE descends below the uniform-classifier baseline") {
    const GmmSource data(toy_gmm());
    TrainConfig cfg = toy_config();
    cfg.steps = 1000;
    cfg.w_ce = 0.5;
    Rng rng(2);
    const TrainResult res = train(cfg, data, rng);
    const double uniform_ce = std::log(double(res.schedule.num_classes()));
    CHECK(res.report.rows.back().ce < uniform_ce);
    // combined loss equals the weighted decomposition
    for (const StepMetrics& row : res.report.rows)
        CHECK(std::abs(row.loss - (cfg.w_ce * row.ce + row.mse)) <= 1e-12);
}

TEST_CASE("ema with decay zero tracks the raw parameters") {
    const GmmSource data(toy_gmm());
    TrainConfig cfg = toy_config();
    cfg.ema_decay = 0.0;
    Rng rng(3);
    const TrainResult res = train(cfg, data, rng);
    const auto raw = res.net.flatten_params(), ema = res.ema_net.flatten_params();
    for (std::size_t i = 0; i < raw.size(); ++i) CHECK(raw[i] == ema[i]);
}

TEST_CASE("ce_only leaves the mse path out of the update") {
    const NoiseSchedule s = NoiseSchedule::build(ScheduleKind::DdpmLinear, 10);
    NetConfig nc;
    nc.input_dim = 2;
    nc.hidden = {8};
    nc.num_classes = s.num_classes();
    ClassifierNet net = ClassifierNet::init(nc, 4);
    Rng rng(5);
    std::normal_distribution<double> n01(0.0, 1.0);
    for (auto& w : net.weights())
        for (int i = 0; i < w.size(); ++i) w.data()[i] += 0.2 * n01(rng);

    // clean and pure-noise samples produce no MSE gradient in any mode
    Batch batch;
    batch.x0 = standard_normal_mat(rng, 2, 4);
    batch.eps = standard_normal_mat(rng, 2, 4);
    batch.t = {0, 0, s.noise_class_index(), s.noise_class_index()};
    batch.xt.resize(2, 4);
    for (int j = 0; j < 4; ++j)
        batch.xt.col(j) = forward_diffuse(s, batch.x0.col(j), batch.t[std::size_t(j)],
                                          batch.eps.col(j));
    GradBuffers grads = net.zero_grads();
    net.loss_and_param_grads(batch, s, 0.0, LossMode::MseOnly, grads);
    CHECK(grads.squaredNorm() == 0.0);
}

TEST_CASE("metrics csv has the documented header and rows") {
    const GmmSource data(toy_gmm());
    TrainConfig cfg = toy_config();
    Rng rng(6);
    const TrainResult res = train(cfg, data, rng);
    const std::string path = "/tmp/cdm_test_metrics.csv";
    res.report.write_csv(path);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header == "step,ce,mse,loss,acc,wall_ms");
    int rows = 0;
    for (std::string line; std::getline(in, line);)
        if (!line.empty()) ++rows;
    CHECK(rows == int(res.report.rows.size()));
    std::remove(path.c_str());
}

TEST_CASE("file source validates its input") {
    const std::string good = "/tmp/cdm_test_data.csv";
    {
        std::ofstream out(good);
        out << "1.0,2.0\n3.0,4.0\n";
    }
    const FileSource src(good);
    CHECK(src.dim() == 2);
    CHECK(src.size() == 2);
    CHECK(src.points()(0, 1) == 3.0);
    std::remove(good.c_str());

    const std::string ragged = "/tmp/cdm_test_ragged.csv";
    {
        std::ofstream out(ragged);
        out << "1.0,2.0\n3.0\n";
    }
    CHECK_THROWS(FileSource{ragged});
    std::remove(ragged.c_str());

    const std::string empty = "/tmp/cdm_test_empty.csv";
    { std::ofstream out(empty); }
    CHECK_THROWS(FileSource{empty});
    std::remove(empty.c_str());
}

TEST_CASE("scale estimation recovers the data standard deviation") {
    UniformBoxDensity unit;
    unit.gamma = std::sqrt(12.0);  // unit variance per dimension
    unit.dim = 4;
    Rng rng(11);
    CHECK(std::abs(estimate_scale(UniformBoxSource(unit), 8192, rng) - 1.0) <= 0.05);

    UniformBoxDensity narrow;
    narrow.gamma = 0.5;
    narrow.dim = 4;
    const double expected = 0.5 / std::sqrt(12.0);
    CHECK(std::abs(estimate_scale(UniformBoxSource(narrow), 8192, rng) - expected) <=
          0.05 * expected);
    CHECK_THROWS_AS(estimate_scale(UniformBoxSource(narrow), 1, rng), std::invalid_argument);
}

TEST_CASE("standardized training records the scale and scaled draws are unit variance") {
    UniformBoxDensity box;
    box.gamma = 0.5;
    box.dim = 3;
    const UniformBoxSource data(box);

    const ScaledSource scaled(data, 0.5 / std::sqrt(12.0));
    Rng srng(12);
    const Mat y = scaled.draw_batch(srng, 4000);
    CHECK(std::abs(y.array().square().mean() - 1.0) <= 0.1);

    TrainConfig cfg;
    cfg.schedule.kind = ScheduleKind::DdpmLinear;
    cfg.schedule.T = 8;
    cfg.net.hidden = {8};
    cfg.steps = 5;
    cfg.batch_size = 16;
    cfg.standardize = true;
    Rng rng(13);
    const TrainResult res = train(cfg, data, rng);
    const double expected = 0.5 / std::sqrt(12.0);
    CHECK(std::abs(res.data_scale - expected) <= 0.05 * expected);

    cfg.standardize = false;
    Rng rng2(13);
    CHECK(train(cfg, data, rng2).data_scale == 1.0);
}
