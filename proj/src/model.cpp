// SPDX-License-Identifier: Apache-2.0

#include "aqtc/model.hpp"

#include "aqtc/error.hpp"

namespace aqtc {

std::string to_string(StepVariant v) { return v == StepVariant::kGru ? "gru" : "mlp"; }

StepVariant parse_step_variant(const std::string& s) {
  if (s == "gru" || s == "GRU") return StepVariant::kGru;
  if (s == "mlp" || s == "MLP") return StepVariant::kMlp;
  throw ConfigError("unknown step variant '" + s + "' (expected gru or mlp)");
}

void ModelConfig::validate() const {
  if (d_v < 1 || d_t < 1 || d_h < 1) throw ConfigError("feature and hidden widths must be positive");
  if (heads < 1) throw ConfigError("heads must be positive");
  if (d_h % heads != 0)
    throw ConfigError("d_h " + std::to_string(d_h) + " is not divisible by heads " + std::to_string(heads));
  if (d_o < 0 || d_s < 0) throw ConfigError("d_o and d_s must be >= 0 (0 selects the default)");
}

}  // namespace aqtc
