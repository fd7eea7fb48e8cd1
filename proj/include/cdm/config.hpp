#pragma once

#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "cdm/oracle.hpp"
#include "cdm/train.hpp"

namespace cdm {

using Json = nlohmann::json;

// Fully-populated defaults; cli `print-config` dumps this merged with overrides.
Json default_config_json();

// Parses schedule/net/train sections (missing keys fall back to defaults).
TrainConfig train_config_from_json(const Json& j);
Json train_config_to_json(const TrainConfig& cfg);

// data section: {"kind": "gmm"|"gaussian"|"uniform_box"|"file", ...}
std::unique_ptr<DataSource> data_source_from_json(const Json& j);
// analytic density for oracle-backed checks; throws for kind "file"
GmmDensity gmm_from_json(const Json& j);

Json load_json_file(const std::string& path);

// FNV-1a over the canonical dump; used as the checkpoint config hash.
std::uint64_t config_hash(const Json& j);

}  // namespace cdm
