// SPDX-License-Identifier: Apache-2.0

#include "aqtc/checkpoint.hpp"

#include <fstream>

#include "aqtc/config.hpp"
#include "aqtc/error.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace aqtc {

void write_checkpoint_document(const fs::path& dir, const CheckpointInfo& info) {
  fs::create_directories(dir);
  json params = json::array();
  for (const auto& d : info.parameters)
    params.push_back({{"name", d.name}, {"path", d.path}, {"rows", d.rows}, {"cols", d.cols}});
  json doc = {{"format", "aqtc-checkpoint"},
              {"format_version", kCheckpointVersion},
              {"dtype", info.dtype},
              {"model", info.model},
              {"train_config", info.train_config},
              {"provenance", {{"best_epoch", info.best_epoch}, {"seed", info.seed}}},
              {"parameters", std::move(params)}};
  std::ofstream out(dir / "checkpoint.json", std::ios::trunc);
  if (!out) throw DataError(DataError::Kind::kIo, "cannot write checkpoint in '" + dir.string() + "'");
  out << doc.dump(2) << '\n';
}

CheckpointInfo read_checkpoint_info(const fs::path& dir) {
  const fs::path path = dir / "checkpoint.json";
  std::ifstream in(path);
  if (!in) throw DataError(DataError::Kind::kMissingFile, "missing checkpoint document '" + path.string() + "'");
  CheckpointInfo info;
  try {
    const json doc = json::parse(in);
    const int version = doc.at("format_version").get<int>();
    if (version != kCheckpointVersion)
      throw DataError(DataError::Kind::kVersion, "checkpoint version " + std::to_string(version) +
                                                     " is not supported (expected " +
                                                     std::to_string(kCheckpointVersion) + ")");
    info.dtype = doc.at("dtype").get<std::string>();
    if (info.dtype != "f32" && info.dtype != "f64")
      throw DataError(DataError::Kind::kParse, "unknown checkpoint dtype '" + info.dtype + "'");
    info.model = doc.at("model").get<ModelConfig>();
    info.train_config = doc.at("train_config");
    info.best_epoch = doc.at("provenance").at("best_epoch").get<int>();
    info.seed = doc.at("provenance").at("seed").get<std::uint64_t>();
    for (const auto& p : doc.at("parameters")) {
      info.parameters.push_back({p.at("name").get<std::string>(), p.at("path").get<std::string>(),
                                 p.at("rows").get<Index>(), p.at("cols").get<Index>()});
    }
  } catch (const json::exception& e) {
    throw DataError(DataError::Kind::kParse, "checkpoint '" + path.string() + "': " + e.what());
  } catch (const ConfigError& e) {
    throw DataError(DataError::Kind::kParse, "checkpoint '" + path.string() + "': " + e.what());
  }
  return info;
}

}  // namespace aqtc
