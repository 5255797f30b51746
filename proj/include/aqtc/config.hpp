// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "aqtc/data_io.hpp"
#include "aqtc/gradcheck.hpp"
#include "aqtc/metrics.hpp"
#include "aqtc/model.hpp"
#include "aqtc/trainer.hpp"

// JSON forms of the configuration and report types. Configuration documents
// reject unknown keys; missing keys keep their defaults.

namespace aqtc {

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

void to_json(nlohmann::json& j, const SyntheticConfig& c);
void from_json(const nlohmann::json& j, SyntheticConfig& c);

void to_json(nlohmann::json& j, const GradCheckConfig& c);
void from_json(const nlohmann::json& j, GradCheckConfig& c);

void to_json(nlohmann::json& j, const MetricsReport& m);

/// Deterministic part of an epoch record (no wall time).
nlohmann::json epoch_json(const EpochRecord& rec);

/// One JSON object per line.
std::string train_log_jsonl(const TrainLog& log);
std::string timing_jsonl(const TrainLog& log);

/// Merges `overrides` into `base`; every key must already exist in `base`.
nlohmann::json merge_config(nlohmann::json base, const nlohmann::json& overrides, const std::string& context);

/// Parses "key=value". The value is read as JSON when it parses as JSON,
/// otherwise it is taken as a string.
std::pair<std::string, nlohmann::json> parse_assignment(const std::string& text);

/// Reads a JSON document; throws ConfigError naming the path.
nlohmann::json read_json_file(const std::string& path);

}  // namespace aqtc
