#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cdm/net.hpp"
#include "cdm/schedule.hpp"

namespace cdm {

// On disk: 8-byte magic, u32 format version, u64 header length, JSON header
// (schedule + net descriptors + meta), then two little-endian f64 blocks
// (raw params, EMA params). Round trips byte-exactly.
struct Checkpoint {
    ScheduleDescriptor schedule;
    NetConfig net;
    std::vector<double> raw_params;
    std::vector<double> ema_params;
    std::uint64_t config_hash = 0;
    std::uint64_t seed = 0;
    int steps = 0;
    double w_ce = 0.0;
    double data_scale = 1.0;  // training-data divisor; 1 unless standardize was on

    ClassifierNet build_net(bool ema) const;

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);
};

}  // namespace cdm
