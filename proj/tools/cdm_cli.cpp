// Command-line front end: train / sample / nll / eval / verify / print-config.
// Exit codes: 0 ok, 2 validation error, 3 numeric or I/O failure, 4 verification failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cdm/cdm.hpp"
#include "cdm/checkpoint.hpp"
#include "cdm/config.hpp"
#include "cdm/eval.hpp"
#include "cdm/net.hpp"
#include "cdm/oracle.hpp"
#include "cdm/sample.hpp"
#include "cdm/train.hpp"

namespace fs = std::filesystem;
using cdm::Json;
using cdm::Mat;
using cdm::Rng;
using cdm::Vec;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitVerifyFail = 4;

void write_text(const std::string& path, const std::string& body) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << body;
    if (!out) throw std::runtime_error("write failed: " + path);
}

void write_samples_csv(const std::string& path, const Mat& samples) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.precision(17);
    for (int j = 0; j < samples.cols(); ++j) {
        for (int i = 0; i < samples.rows(); ++i) {
            if (i) out << ',';
            out << samples(i, j);
        }
        out << '\n';
    }
}

void write_samples_raw(const std::string& path, const Mat& samples) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    // column-major f64, one sample per column
    out.write(reinterpret_cast<const char*>(samples.data()),
              std::streamsize(sizeof(double)) * samples.size());
}

cdm::Checkpoint load_checkpoint(const std::string& path) {
    if (!fs::exists(path)) throw std::invalid_argument("checkpoint not found: " + path);
    return cdm::Checkpoint::load(path);
}

Json merged_config(const std::string& path) {
    Json merged = cdm::default_config_json();
    if (!path.empty()) {
        if (!fs::exists(path)) throw std::invalid_argument("config file not found: " + path);
        const Json user = cdm::load_json_file(path);
        for (const auto& [key, value] : user.items()) {
            if (merged.contains(key) && value.is_object())
                merged[key].update(value);
            else
                merged[key] = value;
        }
    }
    return merged;
}

int cmd_train(const std::string& config_path, const std::string& out_dir,
              const std::string& loss_mode_override, long seed_override, int steps_override) {
    Json cfg_json = merged_config(config_path);
    if (!loss_mode_override.empty()) cfg_json["train"]["loss_mode"] = loss_mode_override;
    if (seed_override >= 0) cfg_json["train"]["seed"] = seed_override;
    if (steps_override > 0) cfg_json["train"]["steps"] = steps_override;

    cdm::TrainConfig cfg = cdm::train_config_from_json(cfg_json);
    std::unique_ptr<cdm::DataSource> data = cdm::data_source_from_json(cfg_json.at("data"));
    cfg.net.input_dim = data->dim();
    cfg.validate();

    fs::create_directories(out_dir);
    Rng rng = cdm::derived_rng(cfg.seed, 0);
    cdm::TrainResult result = cdm::train(cfg, *data, rng);

    cdm::Checkpoint ck;
    ck.schedule = cfg.schedule;
    ck.net = result.net.config();
    ck.raw_params = result.net.flatten_params();
    ck.ema_params = result.ema_net.flatten_params();
    ck.config_hash = cdm::config_hash(cfg_json);
    ck.seed = cfg.seed;
    ck.steps = cfg.steps;
    ck.w_ce = cfg.w_ce;
    ck.data_scale = result.data_scale;
    const std::string ck_path = (fs::path(out_dir) / "checkpoint.bin").string();
    ck.save(ck_path);
    result.report.write_csv((fs::path(out_dir) / "metrics.csv").string());

    cdm::ClassifierModel model(result.ema_net, result.schedule);
    Rng eval_rng = cdm::derived_rng(cfg.seed, 0xe7a1);
    const cdm::NllResult nll =
        cdm::nll_bits_per_dim(model, *data, 2000, 0, eval_rng, result.data_scale);
    const cdm::StepMetrics& last = result.report.rows.back();

    Json summary{{"checkpoint", ck_path},
                 {"final_ce", last.ce},
                 {"final_mse", last.mse},
                 {"final_acc", last.acc},
                 {"nll_nats_per_dim", nll.mean_nats_per_dim},
                 {"nll_bits_per_dim", nll.mean_bits_per_dim},
                 {"wall_ms", result.report.total_wall_ms}};
    std::cout << summary.dump(2) << "\n";
    return 0;
}

int cmd_sample(const std::string& ck_path, const std::string& sampler, int steps, int n,
               long seed, const std::string& sigma, const std::string& out_path,
               const std::string& format) {
    const cdm::Checkpoint ck = load_checkpoint(ck_path);
    const cdm::NoiseSchedule schedule = cdm::NoiseSchedule::build(ck.schedule);
    const cdm::ClassifierNet net = ck.build_net(true);
    cdm::ClassifierModel model(net, schedule);

    cdm::SamplerConfig scfg;
    scfg.sampler = cdm::sampler_kind_from_string(sampler);
    scfg.steps = steps;
    scfg.n_samples = n;
    scfg.seed = std::uint64_t(seed);
    if (sigma == "posterior")
        scfg.sigma = cdm::SigmaKind::PosteriorBeta;
    else if (sigma != "beta")
        throw std::invalid_argument("unknown sigma kind: " + sigma);
    scfg.validate(schedule);

    net.reset_counters();
    Mat samples = cdm::generate_samples(model, scfg);
    samples *= ck.data_scale;  // back to raw data space
    if (format == "csv")
        write_samples_csv(out_path, samples);
    else if (format == "raw")
        write_samples_raw(out_path, samples);
    else
        throw std::invalid_argument("unknown sample format: " + format);

    Json sidecar{{"sampler", cdm::to_string(scfg.sampler)},
                 {"steps", scfg.steps},
                 {"n", scfg.n_samples},
                 {"dim", samples.rows()},
                 {"seed", seed},
                 {"sigma", sigma},
                 {"format", format},
                 {"layout", format == "raw" ? "column-major f64, one sample per column"
                                            : "one sample per row"},
                 {"checkpoint", ck_path},
                 {"data_scale", ck.data_scale},
                 {"gradient_evals_per_sample",
                  double(net.gradient_count()) / double(scfg.n_samples)}};
    write_text(out_path + ".json", sidecar.dump(2) + "\n");
    std::cout << sidecar.dump(2) << "\n";
    return 0;
}

int cmd_nll(const std::string& ck_path, const std::string& data_path, int t,
            const std::string& out_path) {
    const cdm::Checkpoint ck = load_checkpoint(ck_path);
    const cdm::NoiseSchedule schedule = cdm::NoiseSchedule::build(ck.schedule);
    const cdm::ClassifierNet net = ck.build_net(true);
    cdm::ClassifierModel model(net, schedule);

    if (!fs::exists(data_path)) throw std::invalid_argument("data file not found: " + data_path);
    cdm::FileSource file(data_path);
    if (file.dim() != model.dim())
        throw std::invalid_argument("data dimension " + std::to_string(file.dim()) +
                                    " does not match checkpoint dimension " +
                                    std::to_string(model.dim()));
    if (t < 0 || t > schedule.noise_class_index())
        throw std::invalid_argument("t out of range");

    net.reset_counters();
    const cdm::NllResult res = cdm::nll_of_points(model, file.points(), t, ck.data_scale);
    const bool single_nfe = net.forward_count() == std::uint64_t(file.size());

    Json report{{"n", res.n},
                {"t", t},
                {"mean_nll_nats", res.mean_nats},
                {"mean_nll_nats_per_dim", res.mean_nats_per_dim},
                {"mean_nll_bits_per_dim", res.mean_bits_per_dim},
                {"stderr_nats_per_dim", res.stderr_nats_per_dim},
                {"forward_passes", net.forward_count()},
                {"single_nfe", single_nfe}};
    if (!out_path.empty()) write_text(out_path, report.dump(2) + "\n");
    std::cout << report.dump(2) << "\n";
    if (!single_nfe) throw std::runtime_error("expected one forward pass per point");
    return 0;
}

int cmd_eval(const std::string& ck_path, const std::string& config_path,
             const std::string& out_dir, long seed, int n_per_t, int bins) {
    const cdm::Checkpoint ck = load_checkpoint(ck_path);
    const cdm::NoiseSchedule schedule = cdm::NoiseSchedule::build(ck.schedule);
    const cdm::ClassifierNet net = ck.build_net(true);
    cdm::ClassifierModel model(net, schedule);

    const Json cfg_json = merged_config(config_path);
    std::unique_ptr<cdm::DataSource> raw_data = cdm::data_source_from_json(cfg_json.at("data"));
    if (raw_data->dim() != model.dim())
        throw std::invalid_argument("data dimension does not match checkpoint");
    fs::create_directories(out_dir);
    // classifier metrics live in the model's standardized space
    const cdm::ScaledSource scaled(*raw_data, ck.data_scale);
    const cdm::DataSource* data = &scaled;

    // Closed-form reference curve when the data admits one.
    std::unique_ptr<cdm::OracleModel> oracle;
    try {
        cdm::GmmDensity gmm = cdm::gmm_from_json(cfg_json.at("data"));
        if (ck.data_scale != 1.0) {
            std::vector<cdm::Vec> means;
            std::vector<Mat> covs;
            for (const auto& m : gmm.means()) means.push_back(m / ck.data_scale);
            for (const auto& c : gmm.covs())
                covs.push_back(c / (ck.data_scale * ck.data_scale));
            gmm = cdm::GmmDensity::create(gmm.weights(), std::move(means), std::move(covs));
        }
        auto go = std::make_shared<cdm::GmmOracle>(std::move(gmm), schedule);
        oracle = std::make_unique<cdm::OracleModel>(go);
    } catch (const std::invalid_argument&) {
    }

    Rng rng = cdm::derived_rng(std::uint64_t(seed), 1);
    const Vec model_mse = cdm::denoising_mse_per_t(model, *data, n_per_t, rng);
    Vec oracle_mse;
    if (oracle) {
        Rng orng = cdm::derived_rng(std::uint64_t(seed), 1);
        oracle_mse = cdm::denoising_mse_per_t(*oracle, *data, n_per_t, orng);
    }

    std::ofstream curve((fs::path(out_dir) / "mse_curve.csv").string());
    curve.precision(12);
    curve << (oracle ? "t,model_mse,oracle_mse,ratio\n" : "t,model_mse\n");
    for (int i = 0; i < model_mse.size(); ++i) {
        curve << (i + 1) << ',' << model_mse(i);
        if (oracle) curve << ',' << oracle_mse(i) << ',' << model_mse(i) / oracle_mse(i);
        curve << '\n';
    }
    curve.close();

    Rng crng = cdm::derived_rng(std::uint64_t(seed), 2);
    const Mat confusion = cdm::confusion_matrix(model, *data, n_per_t, bins, crng);
    std::ofstream conf((fs::path(out_dir) / "confusion.csv").string());
    conf.precision(12);
    for (int i = 0; i < confusion.rows(); ++i) {
        for (int j = 0; j < confusion.cols(); ++j) {
            if (j) conf << ',';
            conf << confusion(i, j);
        }
        conf << '\n';
    }
    conf.close();

    Rng mrng = cdm::derived_rng(std::uint64_t(seed), 3);
    const cdm::ClassificationMetrics cm = cdm::classification_metrics(model, *data, 4000, mrng);
    Rng nrng = cdm::derived_rng(std::uint64_t(seed), 4);
    const cdm::NllResult nll =
        cdm::nll_bits_per_dim(model, *raw_data, 2000, 0, nrng, ck.data_scale);

    Json summary{{"accuracy", cm.accuracy},
                 {"mean_ce", cm.mean_ce},
                 {"nll_nats_per_dim", nll.mean_nats_per_dim},
                 {"nll_bits_per_dim", nll.mean_bits_per_dim},
                 {"mean_model_mse", model_mse.mean()},
                 {"num_classes", schedule.num_classes()}};
    if (oracle) {
        summary["mean_oracle_mse"] = oracle_mse.mean();
        summary["mean_mse_ratio"] = model_mse.mean() / oracle_mse.mean();
    }
    write_text((fs::path(out_dir) / "summary.json").string(), summary.dump(2) + "\n");
    std::cout << summary.dump(2) << "\n";
    return 0;
}

int cmd_verify(const std::string& suite, const std::string& config_path, long seed) {
    Rng rng = cdm::derived_rng(std::uint64_t(seed), 7);
    Json report{{"suite", suite}};
    double err = 0.0;
    double tol = 0.0;

    if (suite == "gradcheck") {
        tol = 1e-4;
        const cdm::NoiseSchedule schedule =
            cdm::NoiseSchedule::build(cdm::ScheduleKind::DdpmLinear, 8);
        for (int layers = 1; layers <= 3; ++layers) {
            for (int d : {2, 8}) {
                cdm::NetConfig nc;
                nc.input_dim = d;
                nc.hidden.assign(std::size_t(layers), 8);
                nc.num_classes = schedule.num_classes();
                cdm::ClassifierNet net =
                    cdm::ClassifierNet::init(nc, std::uint64_t(layers * 100 + d));
                // zero-initialized head has trivial second-order terms; perturb
                for (auto& w : net.weights())
                    for (int i = 0; i < w.size(); ++i)
                        w.data()[i] += 0.1 * std::normal_distribution<double>()(rng);

                cdm::Batch batch;
                const int B = 16;
                batch.x0 = cdm::standard_normal_mat(rng, d, B);
                batch.eps = cdm::standard_normal_mat(rng, d, B);
                batch.xt.resize(d, B);
                batch.t.resize(std::size_t(B));
                for (int j = 0; j < B; ++j) {
                    batch.t[std::size_t(j)] = cdm::sample_timestep(rng, schedule);
                    batch.xt.col(j) = cdm::forward_diffuse(schedule, batch.x0.col(j),
                                                           batch.t[std::size_t(j)],
                                                           batch.eps.col(j));
                }
                err = std::max(err, cdm::param_gradcheck(net, batch, schedule, 0.5,
                                                         cdm::LossMode::Both));
            }
        }
    } else if (suite == "theorem1" || suite == "theorem2" || suite == "tweedie") {
        const Json cfg_json = merged_config(config_path);
        const cdm::GmmDensity gmm = cdm::gmm_from_json(cfg_json.at("data"));
        const cdm::NoiseSchedule schedule =
            cdm::NoiseSchedule::build(cdm::ScheduleKind::DdpmLinear, 100);
        const cdm::GmmOracle oracle(gmm, schedule);

        const int n_points = 200;
        Mat points(gmm.dim(), n_points);
        for (int j = 0; j < n_points; ++j) points.col(j) = gmm.sample(rng);
        std::vector<int> ts;
        for (int t = 1; t <= schedule.T(); t += schedule.T() / 10) ts.push_back(t);

        if (suite == "theorem1") {
            tol = 1e-8;
            err = cdm::verify_theorem1(oracle, points, ts);
        } else if (suite == "theorem2") {
            tol = 1e-10;
            err = cdm::verify_theorem2(oracle, points, ts);
        } else {
            tol = 1e-6;
            err = cdm::verify_tweedie(oracle, points, ts);
        }
    } else {
        throw CLI::ValidationError("--suite", "unknown suite: " + suite);
    }

    const bool pass = err <= tol;
    report["max_rel_err"] = err;
    report["tolerance"] = tol;
    report["pass"] = pass;
    std::cout << report.dump(2) << "\n";
    return pass ? 0 : kExitVerifyFail;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"noise-level-classifier diffusion toolkit"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "out", ck_path, data_path, out_path, suite;
    std::string sampler = "ddpm", sigma = "beta", format = "csv", loss_mode;
    int steps = 0, n = 1000, t = 0, n_per_t = 200, bins = 10, steps_override = 0;
    long seed = 0, seed_override = -1;

    auto* tr = app.add_subcommand("train", "train a model from a config file");
    tr->add_option("--config", config_path, "config file (structured text)")->required();
    tr->add_option("--out", out_dir, "output directory");
    tr->add_option("--loss-mode", loss_mode, "override: both|ce_only|mse_only");
    tr->add_option("--seed", seed_override, "override training seed");
    tr->add_option("--steps", steps_override, "override step count");

    auto* sa = app.add_subcommand("sample", "draw samples from a checkpoint");
    sa->add_option("--checkpoint", ck_path)->required();
    sa->add_option("--sampler", sampler, "ddpm|ddim|ot_euler");
    sa->add_option("--steps", steps, "0 = full schedule");
    sa->add_option("--n", n, "number of samples");
    sa->add_option("--seed", seed);
    sa->add_option("--sigma", sigma, "beta|posterior");
    sa->add_option("--out", out_path, "samples file")->required();
    sa->add_option("--format", format, "csv|raw");

    auto* nl = app.add_subcommand("nll", "exact likelihood of a data file");
    nl->add_option("--checkpoint", ck_path)->required();
    nl->add_option("--data", data_path, "CSV, one point per row")->required();
    nl->add_option("--t", t, "timestep whose marginal is evaluated");
    nl->add_option("--out", out_path, "optional JSON report path");

    auto* ev = app.add_subcommand("eval", "metrics bundle for a checkpoint");
    ev->add_option("--checkpoint", ck_path)->required();
    ev->add_option("--config", config_path, "config providing the data section")->required();
    ev->add_option("--out", out_dir, "output directory");
    ev->add_option("--seed", seed);
    ev->add_option("--n-per-t", n_per_t);
    ev->add_option("--bins", bins);

    auto* ve = app.add_subcommand("verify", "closed-form and gradient checks");
    ve->add_option("--suite", suite, "theorem1|theorem2|tweedie|gradcheck")->required();
    ve->add_option("--config", config_path, "density config (gmm suites)");
    ve->add_option("--seed", seed);

    auto* pc = app.add_subcommand("print-config", "dump the merged configuration");
    pc->add_option("--config", config_path, "optional overrides to merge");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitValidation;
    }

    try {
        if (tr->parsed())
            return cmd_train(config_path, out_dir, loss_mode, seed_override, steps_override);
        if (sa->parsed())
            return cmd_sample(ck_path, sampler, steps, n, seed, sigma, out_path, format);
        if (nl->parsed()) return cmd_nll(ck_path, data_path, t, out_path);
        if (ev->parsed()) return cmd_eval(ck_path, config_path, out_dir, seed, n_per_t, bins);
        if (ve->parsed()) return cmd_verify(suite, config_path, seed);
        if (pc->parsed()) {
            std::cout << merged_config(config_path).dump(2) << "\n";
            return 0;
        }
    } catch (const CLI::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    }
    return 0;
}
