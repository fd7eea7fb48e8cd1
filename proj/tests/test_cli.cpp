#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

using Json = nlohmann::json;

namespace {

const std::string kCli = CDM_CLI_PATH;
const std::string kDir = "/tmp/cdm_cli_test";

int run(const std::string& args, const std::string& out_file = "") {
    std::string cmd = kCli + " " + args + " >" + (out_file.empty() ? "/dev/null" : out_file) +
                      " 2>/dev/null";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_toy_config(const std::string& path) {
    Json cfg{{"schedule", {{"kind", "ddpm_linear"}, {"T", 10}}},
             {"net", {{"hidden", {12, 12}}}},
             {"train", {{"steps", 40}, {"batch_size", 16}, {"w_ce", 0.1}, {"seed", 3}}}};
    std::ofstream(path) << cfg.dump(2);
}

struct Setup {
    Setup() {
        std::system(("mkdir -p " + kDir).c_str());
        write_toy_config(kDir + "/toy.json");
    }
};
const Setup setup_once;

}  // namespace

TEST_CASE("missing config file fails validation with the path named") {
    CHECK(run("train --config /tmp/no_such_config.json --out " + kDir) == 2);
}

TEST_CASE("print-config dumps a complete default configuration") {
    const std::string out = kDir + "/pc.json";
    CHECK(run("print-config", out) == 0);
    const Json cfg = Json::parse(slurp(out));
    CHECK(cfg.contains("schedule"));
    CHECK(cfg.contains("net"));
    CHECK(cfg.contains("train"));
    CHECK(cfg.contains("data"));
    CHECK(cfg["train"]["w_ce"] == 0.001);
    CHECK(cfg["train"]["ema_decay"] == 0.9999);
}

TEST_CASE("training is reproducible and checkpoints are identical") {
    const std::string cfg = kDir + "/toy.json";
    REQUIRE(run("train --config " + cfg + " --out " + kDir + "/a") == 0);
    REQUIRE(run("train --config " + cfg + " --out " + kDir + "/b") == 0);
    CHECK(slurp(kDir + "/a/checkpoint.bin") == slurp(kDir + "/b/checkpoint.bin"));
    CHECK(slurp(kDir + "/a/metrics.csv").rfind("step,ce,mse,loss,acc,wall_ms", 0) == 0);
}

TEST_CASE("sampling guards and instrumentation") {
    const std::string ck = kDir + "/a/checkpoint.bin";
    CHECK(run("sample --checkpoint " + ck + " --n 0 --out " + kDir + "/s.csv") == 2);
    CHECK(run("sample --checkpoint " + ck + " --sampler ot_euler --steps 5 --n 3 --out " +
              kDir + "/s.csv") == 2);

    const std::string out = kDir + "/side.json";
    REQUIRE(run("sample --checkpoint " + ck + " --sampler ddim --steps 5 --n 4 --out " + kDir +
                "/s.csv", out) == 0);
    const Json sidecar = Json::parse(slurp(out));
    CHECK(sidecar["gradient_evals_per_sample"] == 5.0);
    CHECK(sidecar["dim"] == 2);

    // raw block: n * dim doubles plus a sidecar
    REQUIRE(run("sample --checkpoint " + ck + " --sampler ddpm --n 6 --format raw --out " +
                kDir + "/s.raw") == 0);
    CHECK(slurp(kDir + "/s.raw").size() == 6 * 2 * sizeof(double));
}

TEST_CASE("nll reports a single forward pass per point") {
    const std::string ck = kDir + "/a/checkpoint.bin";
    REQUIRE(run("sample --checkpoint " + ck + " --sampler ddpm --n 25 --out " + kDir +
                "/pts.csv") == 0);
    const std::string out = kDir + "/nll.json";
    REQUIRE(run("nll --checkpoint " + ck + " --data " + kDir + "/pts.csv", out) == 0);
    const Json report = Json::parse(slurp(out));
    CHECK(report["n"] == 25);
    CHECK(report["forward_passes"] == 25);
    CHECK(report["single_nfe"] == true);

    // dimension mismatch is a validation error
    std::ofstream(kDir + "/bad.csv") << "1,2,3\n";
    CHECK(run("nll --checkpoint " + ck + " --data " + kDir + "/bad.csv") == 2);
}

TEST_CASE("nll at the pure-noise class matches the gaussian reference") {
    const std::string ck = kDir + "/a/checkpoint.bin";
    std::ofstream(kDir + "/zeros.csv") << "0,0\n";
    const std::string out = kDir + "/nll0.json";
    REQUIRE(run("nll --checkpoint " + ck + " --data " + kDir + "/zeros.csv --t 11", out) == 0);
    const Json report = Json::parse(slurp(out));
    const double expect = std::log(2.0 * M_PI);  // -log N(0;0,I) in 2 dims
    CHECK(std::abs(report["mean_nll_nats"].get<double>() - expect) <= 1e-10);
}

TEST_CASE("eval writes the documented bundle") {
    const std::string ck = kDir + "/a/checkpoint.bin";
    REQUIRE(run("eval --checkpoint " + ck + " --config " + kDir + "/toy.json --out " + kDir +
                "/ev --n-per-t 20") == 0);
    CHECK(slurp(kDir + "/ev/mse_curve.csv").rfind("t,model_mse,oracle_mse,ratio", 0) == 0);
    CHECK(!slurp(kDir + "/ev/confusion.csv").empty());
    const Json summary = Json::parse(slurp(kDir + "/ev/summary.json"));
    CHECK(summary.contains("nll_bits_per_dim"));
    CHECK(summary.contains("mean_mse_ratio"));
}

TEST_CASE("verify subcommand exit codes") {
    CHECK(run("verify --suite theorem1") == 0);
    CHECK(run("verify --suite nonsense") == 2);
}
