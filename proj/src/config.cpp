#include "cdm/config.hpp"

#include <fstream>
#include <stdexcept>

namespace cdm {

namespace {

Vec vec_from_json(const Json& j) {
    Vec v(j.size());
    for (size_t i = 0; i < j.size(); ++i) v(int(i)) = j[i].get<double>();
    return v;
}

Mat mat_from_json(const Json& j) {
    const int rows = int(j.size());
    const int cols = int(j[0].size());
    Mat m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int c = 0; c < cols; ++c) m(i, c) = j[size_t(i)][size_t(c)].get<double>();
    return m;
}

}  // namespace

Json default_config_json() {
    return Json{
        {"schedule", {{"kind", "ddpm_linear"}, {"T", 100}, {"beta_min", 1e-4}, {"beta_max", 0.02}}},
        {"net", {{"hidden", {256, 256, 256}}, {"activation", "silu"}, {"cumsum_head", true}}},
        {"train",
         {{"w_ce", 0.001},
          {"steps", 1000},
          {"batch_size", 128},
          {"lr", 1e-3},
          {"beta1", 0.9},
          {"beta2", 0.999},
          {"ema_decay", 0.9999},
          {"final_lr_fraction", 1.0},
          {"standardize", false},
          {"seed", 0},
          {"loss_mode", "both"},
          {"log_every", 100}}},
        {"data", {{"kind", "gmm"},
                  {"weights", {0.5, 0.5}},
                  {"means", {{-1.5, 0.0}, {1.5, 0.0}}},
                  {"covs", Json::array({{{0.3, 0.0}, {0.0, 0.3}}, {{0.3, 0.0}, {0.0, 0.3}}})}}},
    };
}

TrainConfig train_config_from_json(const Json& j) {
    const Json defaults = default_config_json();
    auto section = [&](const char* name) {
        Json merged = defaults.at(name);
        if (j.contains(name)) merged.update(j.at(name));
        return merged;
    };

    TrainConfig cfg;
    const Json sched = section("schedule");
    cfg.schedule.kind = schedule_kind_from_string(sched.at("kind").get<std::string>());
    cfg.schedule.T = sched.at("T").get<int>();
    cfg.schedule.beta_min = sched.at("beta_min").get<double>();
    cfg.schedule.beta_max = sched.at("beta_max").get<double>();

    const Json net = section("net");
    cfg.net.hidden = net.at("hidden").get<std::vector<int>>();
    cfg.net.activation = activation_from_string(net.at("activation").get<std::string>());
    cfg.net.cumsum_head = net.at("cumsum_head").get<bool>();

    const Json tr = section("train");
    cfg.w_ce = tr.at("w_ce").get<double>();
    cfg.steps = tr.at("steps").get<int>();
    cfg.batch_size = tr.at("batch_size").get<int>();
    cfg.adam.lr = tr.at("lr").get<double>();
    cfg.adam.beta1 = tr.at("beta1").get<double>();
    cfg.adam.beta2 = tr.at("beta2").get<double>();
    cfg.ema_decay = tr.at("ema_decay").get<double>();
    cfg.final_lr_fraction = tr.at("final_lr_fraction").get<double>();
    cfg.standardize = tr.at("standardize").get<bool>();
    cfg.seed = tr.at("seed").get<std::uint64_t>();
    cfg.loss_mode = loss_mode_from_string(tr.at("loss_mode").get<std::string>());
    cfg.log_every = tr.at("log_every").get<int>();
    return cfg;
}

Json train_config_to_json(const TrainConfig& cfg) {
    return Json{
        {"schedule",
         {{"kind", to_string(cfg.schedule.kind)},
          {"T", cfg.schedule.T},
          {"beta_min", cfg.schedule.beta_min},
          {"beta_max", cfg.schedule.beta_max}}},
        {"net",
         {{"hidden", cfg.net.hidden},
          {"activation", to_string(cfg.net.activation)},
          {"cumsum_head", cfg.net.cumsum_head}}},
        {"train",
         {{"w_ce", cfg.w_ce},
          {"steps", cfg.steps},
          {"batch_size", cfg.batch_size},
          {"lr", cfg.adam.lr},
          {"beta1", cfg.adam.beta1},
          {"beta2", cfg.adam.beta2},
          {"ema_decay", cfg.ema_decay},
          {"final_lr_fraction", cfg.final_lr_fraction},
          {"standardize", cfg.standardize},
          {"seed", cfg.seed},
          {"loss_mode", to_string(cfg.loss_mode)},
          {"log_every", cfg.log_every}}},
    };
}

GmmDensity gmm_from_json(const Json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "gmm") {
        std::vector<double> weights = j.at("weights").get<std::vector<double>>();
        std::vector<Vec> means;
        std::vector<Mat> covs;
        for (const auto& m : j.at("means")) means.push_back(vec_from_json(m));
        for (const auto& c : j.at("covs")) covs.push_back(mat_from_json(c));
        return GmmDensity::create(std::move(weights), std::move(means), std::move(covs));
    }
    if (kind == "gaussian") {
        const Mat cov = mat_from_json(j.at("cov"));
        Vec mean = Vec::Zero(cov.rows());
        if (j.contains("mean")) mean = vec_from_json(j.at("mean"));
        return GmmDensity::single(mean, cov);
    }
    throw std::invalid_argument("density config kind '" + kind + "' has no analytic gmm form");
}

std::unique_ptr<DataSource> data_source_from_json(const Json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "gmm" || kind == "gaussian")
        return std::make_unique<GmmSource>(gmm_from_json(j));
    if (kind == "uniform_box") {
        UniformBoxDensity box;
        box.gamma = j.at("gamma").get<double>();
        box.dim = j.at("dim").get<int>();
        return std::make_unique<UniformBoxSource>(box);
    }
    if (kind == "file") return std::make_unique<FileSource>(j.at("path").get<std::string>());
    throw std::invalid_argument("unknown data source kind: " + kind);
}

Json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw std::runtime_error("config parse error in " + path + ": " + e.what());
    }
}

std::uint64_t config_hash(const Json& j) {
    const std::string s = j.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace cdm
