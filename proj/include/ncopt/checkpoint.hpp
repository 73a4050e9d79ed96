#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "ncopt/params.hpp"

namespace ncopt {

// Checkpoint container: one line of UTF-8 JSON (format version, dtype,
// embedded model config, tensor directory with byte offsets), then a newline,
// then raw little-endian float32 payloads in directory order. Round-trips
// bit-exactly on little-endian hosts, which is all this project targets.
inline constexpr const char* kCheckpointFormat = "ncopt-ckpt-1";

void save_checkpoint(const std::string& path, const nlohmann::json& config,
                     const ParameterSet<float>& params);

struct LoadedCheckpoint {
  nlohmann::json config;
  ParameterSet<float> params;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

// Short stable identifier for reports: basename plus a hash of the bytes.
std::string checkpoint_id(const std::string& path);

}  // namespace ncopt
