#include "ncopt/checkpoint.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>

namespace ncopt {

using nlohmann::json;

static_assert(sizeof(float) == 4, "float32 payload layout");

void save_checkpoint(const std::string& path, const json& config,
                     const ParameterSet<float>& params) {
  json dir = json::array();
  uint64_t offset = 0;
  for (const auto& name : params.names()) {
    const Tensor<float>& t = params.at(name);
    dir.push_back(json{{"name", name},
                       {"rows", t.rows},
                       {"cols", t.cols},
                       {"offset", offset},
                       {"trainable", params.trainable(name)}});
    offset += static_cast<uint64_t>(t.numel()) * sizeof(float);
  }
  json manifest{{"format", kCheckpointFormat},
                {"dtype", "float32"},
                {"config", config},
                {"tensors", dir}};

  std::ofstream out(path, std::ios::binary);
  NC_REQUIRE(out.good(), "cannot open '" << path << "' for writing");
  out << manifest.dump() << '\n';
  for (const auto& name : params.names()) {
    const Tensor<float>& t = params.at(name);
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  }
  NC_CHECK(out.good(), "write failed for '" << path << "'");
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  NC_REQUIRE(in.good(), "cannot open checkpoint '" << path << "'");

  std::string line;
  NC_REQUIRE(static_cast<bool>(std::getline(in, line)), "checkpoint '" << path << "' is empty");
  json manifest;
  try {
    manifest = json::parse(line);
  } catch (const json::exception& e) {
    NC_REQUIRE(false, "checkpoint '" << path << "' has a malformed manifest: " << e.what());
  }
  NC_REQUIRE(manifest.value("format", "") == kCheckpointFormat,
             "unknown checkpoint version '" << manifest.value("format", "<missing>") << "' in '"
                                            << path << "' (expected " << kCheckpointFormat << ")");
  NC_REQUIRE(manifest.value("dtype", "") == "float32",
             "unsupported checkpoint dtype '" << manifest.value("dtype", "<missing>") << "'");

  const std::streampos payload_start = in.tellg();
  LoadedCheckpoint ck;
  ck.config = manifest.at("config");
  for (const json& e : manifest.at("tensors")) {
    const std::string name = e.at("name").get<std::string>();
    const int rows = e.at("rows").get<int>();
    const int cols = e.at("cols").get<int>();
    const uint64_t offset = e.at("offset").get<uint64_t>();
    const bool trainable = e.value("trainable", true);
    Tensor<float>& t = ck.params.add(name, rows, cols, trainable);
    in.seekg(payload_start + static_cast<std::streamoff>(offset));
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    NC_REQUIRE(in.good(), "checkpoint '" << path << "' truncated while reading tensor '" << name
                                         << "'");
  }
  return ck;
}

std::string checkpoint_id(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  NC_REQUIRE(in.good(), "cannot open checkpoint '" << path << "'");
  uint64_t h = 1469598103934665603ULL;  // FNV-1a
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
    if (!in) break;
  }
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
  return std::filesystem::path(path).filename().string() + "#" + std::string(hex, 8);
}

}  // namespace ncopt
