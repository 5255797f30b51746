// SPDX-License-Identifier: Apache-2.0

#include "aqtc/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "aqtc/error.hpp"
#include "aqtc/rng.hpp"

namespace aqtc {

std::string to_string(Precision p) { return p == Precision::kFloat32 ? "f32" : "f64"; }

Precision parse_precision(const std::string& s) {
  if (s == "f32" || s == "float32") return Precision::kFloat32;
  if (s == "f64" || s == "float64") return Precision::kFloat64;
  throw ConfigError("unknown precision '" + s + "' (expected f32 or f64)");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate >= 0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be finite and >= 0");
  if (!(val_fraction > 0 && val_fraction < 1)) throw ConfigError("val_fraction must lie strictly between 0 and 1");
  if (workers < 1) throw ConfigError("workers must be >= 1");
  if (shuffle_seed < -1) throw ConfigError("shuffle_seed must be >= 0, or -1 to derive it from seed");
  buckets.validate();
  model_config(1, 1).validate();
}

ModelConfig TrainConfig::model_config(int d_v, int d_t) const {
  ModelConfig m;
  m.d_v = d_v;
  m.d_t = d_t;
  m.d_h = d_h;
  m.heads = heads;
  m.d_o = d_o;
  m.d_s = d_s;
  m.step_variant = step_variant;
  return m;
}

std::uint64_t TrainConfig::effective_shuffle_seed() const {
  return shuffle_seed >= 0 ? static_cast<std::uint64_t>(shuffle_seed) : seed ^ 0x9e3779b97f4a7c15ULL;
}

Split stratified_split(std::span<const FeatureBundle> samples, double val_fraction, std::uint64_t seed,
                       const BucketScheme& scheme) {
  if (samples.empty()) throw ContractError("stratified_split: empty dataset");
  if (!(val_fraction > 0 && val_fraction < 1))
    throw ConfigError("stratified_split: validation fraction must lie strictly between 0 and 1");
  scheme.validate();
  std::map<std::string, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < samples.size(); ++i) members[scheme.label_for(samples[i].button_count)].push_back(i);

  Rng rng(seed);
  std::vector<bool> is_val(samples.size(), false);
  for (const auto& label : scheme.labels()) {
    auto it = members.find(label);
    if (it == members.end()) continue;
    auto pool = it->second;
    const auto take = static_cast<std::size_t>(std::round(val_fraction * static_cast<double>(pool.size())));
    rng.shuffle(pool);
    for (std::size_t k = 0; k < take; ++k) is_val[pool[k]] = true;
  }
  Split out;
  for (std::size_t i = 0; i < samples.size(); ++i) (is_val[i] ? out.validation : out.train).push_back(i);
  return out;
}

bool better_epoch(const MetricsReport& a, const MetricsReport& b) {
  if (a.r_at_1() != b.r_at_1()) return a.r_at_1() > b.r_at_1();
  if (a.mrr() != b.mrr()) return a.mrr() > b.mrr();
  return a.mr() < b.mr();
}

int select_best(const TrainLog& log) {
  if (log.epochs.empty()) throw ContractError("select_best: empty training log");
  std::size_t best = 0;
  for (std::size_t i = 1; i < log.epochs.size(); ++i)
    if (better_epoch(log.epochs[i].validation, log.epochs[best].validation)) best = i;
  return log.epochs[best].epoch;
}

}  // namespace aqtc
