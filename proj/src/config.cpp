// SPDX-License-Identifier: Apache-2.0

#include "aqtc/config.hpp"

#include <fstream>
#include <sstream>

#include "aqtc/error.hpp"

using nlohmann::json;

namespace aqtc {

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> known, const char* what) {
  if (!j.is_object()) throw ConfigError(std::string(what) + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw ConfigError(std::string("unknown ") + what + " key '" + key + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

}  // namespace

void to_json(json& j, const ModelConfig& c) {
  j = {{"d_v", c.d_v},     {"d_t", c.d_t}, {"d_h", c.d_h}, {"heads", c.heads},
       {"d_o", c.d_o},     {"d_s", c.d_s}, {"step_variant", to_string(c.step_variant)}};
}

void from_json(const json& j, ModelConfig& c) {
  reject_unknown(j, {"d_v", "d_t", "d_h", "heads", "d_o", "d_s", "step_variant"}, "model config");
  read(j, "d_v", c.d_v);
  read(j, "d_t", c.d_t);
  read(j, "d_h", c.d_h);
  read(j, "heads", c.heads);
  read(j, "d_o", c.d_o);
  read(j, "d_s", c.d_s);
  if (j.contains("step_variant")) c.step_variant = parse_step_variant(j.at("step_variant").get<std::string>());
}

void to_json(json& j, const TrainConfig& c) {
  j = {{"epochs", c.epochs},
       {"batch_size", c.batch_size},
       {"learning_rate", c.learning_rate},
       {"d_h", c.d_h},
       {"heads", c.heads},
       {"d_o", c.d_o},
       {"d_s", c.d_s},
       {"step_variant", to_string(c.step_variant)},
       {"seed", c.seed},
       {"shuffle_seed", c.shuffle_seed},
       {"precision", to_string(c.precision)},
       {"val_fraction", c.val_fraction},
       {"bucket_bounds", c.buckets.upper_bounds},
       {"workers", c.workers}};
}

void from_json(const json& j, TrainConfig& c) {
  reject_unknown(j,
                 {"epochs", "batch_size", "learning_rate", "d_h", "heads", "d_o", "d_s", "step_variant", "seed",
                  "shuffle_seed", "precision", "val_fraction", "bucket_bounds", "workers"},
                 "train config");
  read(j, "epochs", c.epochs);
  read(j, "batch_size", c.batch_size);
  read(j, "learning_rate", c.learning_rate);
  read(j, "d_h", c.d_h);
  read(j, "heads", c.heads);
  read(j, "d_o", c.d_o);
  read(j, "d_s", c.d_s);
  if (j.contains("step_variant")) c.step_variant = parse_step_variant(j.at("step_variant").get<std::string>());
  read(j, "seed", c.seed);
  read(j, "shuffle_seed", c.shuffle_seed);
  if (j.contains("precision")) c.precision = parse_precision(j.at("precision").get<std::string>());
  read(j, "val_fraction", c.val_fraction);
  read(j, "bucket_bounds", c.buckets.upper_bounds);
  read(j, "workers", c.workers);
}

void to_json(json& j, const SyntheticConfig& c) {
  j = {{"n_samples", c.n_samples},
       {"frames", c.frames},
       {"frame_multiplier", c.frame_multiplier},
       {"sentences", c.sentences},
       {"steps", c.steps},
       {"candidates", c.candidates},
       {"d", c.d},
       {"noise_sigma", c.noise_sigma},
       {"bucket_mix", c.bucket_mix},
       {"bucket_bounds", c.buckets.upper_bounds},
       {"max_buttons", c.max_buttons},
       {"seed", c.seed}};
}

void from_json(const json& j, SyntheticConfig& c) {
  reject_unknown(j,
                 {"n_samples", "frames", "frame_multiplier", "sentences", "steps", "candidates", "d", "noise_sigma",
                  "bucket_mix", "bucket_bounds", "max_buttons", "seed"},
                 "synthetic config");
  read(j, "n_samples", c.n_samples);
  read(j, "frames", c.frames);
  read(j, "frame_multiplier", c.frame_multiplier);
  read(j, "sentences", c.sentences);
  read(j, "steps", c.steps);
  read(j, "candidates", c.candidates);
  read(j, "d", c.d);
  read(j, "noise_sigma", c.noise_sigma);
  read(j, "bucket_mix", c.bucket_mix);
  read(j, "bucket_bounds", c.buckets.upper_bounds);
  read(j, "max_buttons", c.max_buttons);
  read(j, "seed", c.seed);
}

void to_json(json& j, const GradCheckConfig& c) {
  j = {{"d_in", c.d_in},
       {"d_h", c.d_h},
       {"heads", c.heads},
       {"frames", c.frames},
       {"sentences", c.sentences},
       {"candidates", c.candidates},
       {"steps", c.steps},
       {"step_variant", to_string(c.step_variant)},
       {"seed", c.seed},
       {"step", c.step},
       {"coords_per_tensor", c.coords_per_tensor},
       {"tolerance", c.tolerance}};
}

void from_json(const json& j, GradCheckConfig& c) {
  reject_unknown(j,
                 {"d_in", "d_h", "heads", "frames", "sentences", "candidates", "steps", "step_variant", "seed", "step",
                  "coords_per_tensor", "tolerance"},
                 "gradcheck config");
  read(j, "d_in", c.d_in);
  read(j, "d_h", c.d_h);
  read(j, "heads", c.heads);
  read(j, "frames", c.frames);
  read(j, "sentences", c.sentences);
  read(j, "candidates", c.candidates);
  read(j, "steps", c.steps);
  if (j.contains("step_variant")) c.step_variant = parse_step_variant(j.at("step_variant").get<std::string>());
  read(j, "seed", c.seed);
  read(j, "step", c.step);
  read(j, "coords_per_tensor", c.coords_per_tensor);
  read(j, "tolerance", c.tolerance);
}

void to_json(json& j, const MetricsReport& m) {
  j = {{"r_at_1", m.r_at_1()}, {"r_at_3", m.r_at_3()}, {"mr", m.mr()}, {"mrr", m.mrr()}, {"count", m.count()}};
}

json epoch_json(const EpochRecord& rec) {
  return {{"epoch", rec.epoch},
          {"train_loss", rec.train_loss},
          {"validation", rec.validation},
          {"validation_carry", rec.validation_carry == CarryMode::kGreedy ? "greedy" : "teacher_forcing"},
          {"optimizer_steps", rec.optimizer_steps}};
}

std::string train_log_jsonl(const TrainLog& log) {
  std::ostringstream os;
  for (const auto& rec : log.epochs) os << epoch_json(rec).dump() << '\n';
  return os.str();
}

std::string timing_jsonl(const TrainLog& log) {
  std::ostringstream os;
  for (const auto& rec : log.epochs) os << json{{"epoch", rec.epoch}, {"wall_seconds", rec.wall_seconds}}.dump() << '\n';
  return os.str();
}

json merge_config(json base, const json& overrides, const std::string& context) {
  if (!overrides.is_object()) throw ConfigError(context + ": expected a JSON object");
  for (const auto& [key, value] : overrides.items()) {
    if (!base.contains(key)) throw ConfigError(context + ": unknown key '" + key + "'");
    base[key] = value;
  }
  return base;
}

std::pair<std::string, json> parse_assignment(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + text + "' is not of the form key=value");
  const std::string key = text.substr(0, eq);
  const std::string raw = text.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  return {key, value};
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config file '" + path + "': " + e.what());
  }
}

}  // namespace aqtc
