#include "cdm/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace cdm {

namespace {

constexpr char kMagic[8] = {'C', 'D', 'M', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

static_assert(sizeof(double) == 8);

void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char buf[4];
    for (int i = 0; i < 4; ++i) buf[i] = (unsigned char)((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(buf), 4);
}

void write_u64(std::ostream& out, std::uint64_t v) {
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = (unsigned char)((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint32_t read_u32(std::istream& in) {
    unsigned char buf[4];
    in.read(reinterpret_cast<char*>(buf), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(buf[i]) << (8 * i);
    return v;
}

std::uint64_t read_u64(std::istream& in) {
    unsigned char buf[8];
    in.read(reinterpret_cast<char*>(buf), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(buf[i]) << (8 * i);
    return v;
}

void write_f64_block(std::ostream& out, const std::vector<double>& v) {
    write_u64(out, v.size());
    for (double d : v) {
        std::uint64_t bits;
        std::memcpy(&bits, &d, 8);
        write_u64(out, bits);
    }
}

std::vector<double> read_f64_block(std::istream& in) {
    const std::uint64_t n = read_u64(in);
    std::vector<double> v(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        const std::uint64_t bits = read_u64(in);
        std::memcpy(&v[i], &bits, 8);
    }
    return v;
}

}  // namespace

ClassifierNet Checkpoint::build_net(bool ema) const {
    ClassifierNet out = ClassifierNet::init(net, 0);
    out.load_params(ema ? ema_params : raw_params);
    return out;
}

void Checkpoint::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);

    nlohmann::json header{
        {"schedule",
         {{"kind", to_string(schedule.kind)},
          {"T", schedule.T},
          {"beta_min", schedule.beta_min},
          {"beta_max", schedule.beta_max}}},
        {"net",
         {{"input_dim", net.input_dim},
          {"hidden", net.hidden},
          {"num_classes", net.num_classes},
          {"activation", to_string(net.activation)},
          {"cumsum_head", net.cumsum_head}}},
        {"meta",
         {{"config_hash", config_hash},
          {"seed", seed},
          {"steps", steps},
          {"w_ce", w_ce},
          {"data_scale", data_scale}}},
    };
    const std::string hs = header.dump();

    out.write(kMagic, 8);
    write_u32(out, kVersion);
    write_u64(out, hs.size());
    out.write(hs.data(), std::streamsize(hs.size()));
    write_f64_block(out, raw_params);
    write_f64_block(out, ema_params);
    if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);

    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("not a checkpoint file: " + path);
    const std::uint32_t version = read_u32(in);
    if (version != kVersion)
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version) +
                                 " in " + path);

    const std::uint64_t hlen = read_u64(in);
    std::string hs(hlen, '\0');
    in.read(hs.data(), std::streamsize(hlen));
    if (!in) throw std::runtime_error("truncated checkpoint header: " + path);
    const nlohmann::json header = nlohmann::json::parse(hs);

    Checkpoint ck;
    const auto& sched = header.at("schedule");
    ck.schedule.kind = schedule_kind_from_string(sched.at("kind").get<std::string>());
    ck.schedule.T = sched.at("T").get<int>();
    ck.schedule.beta_min = sched.at("beta_min").get<double>();
    ck.schedule.beta_max = sched.at("beta_max").get<double>();

    const auto& net = header.at("net");
    ck.net.input_dim = net.at("input_dim").get<int>();
    ck.net.hidden = net.at("hidden").get<std::vector<int>>();
    ck.net.num_classes = net.at("num_classes").get<int>();
    ck.net.activation = activation_from_string(net.at("activation").get<std::string>());
    ck.net.cumsum_head = net.at("cumsum_head").get<bool>();

    const auto& meta = header.at("meta");
    ck.config_hash = meta.at("config_hash").get<std::uint64_t>();
    ck.seed = meta.at("seed").get<std::uint64_t>();
    ck.steps = meta.at("steps").get<int>();
    ck.w_ce = meta.at("w_ce").get<double>();
    ck.data_scale = meta.value("data_scale", 1.0);

    ck.raw_params = read_f64_block(in);
    ck.ema_params = read_f64_block(in);
    if (!in) throw std::runtime_error("truncated checkpoint payload: " + path);
    return ck;
}

}  // namespace cdm
