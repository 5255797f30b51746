// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aqtc/features.hpp"
#include "aqtc/grounding.hpp"
#include "aqtc/step_network.hpp"

namespace aqtc {

struct ModelConfig {
  int d_v = 768;
  int d_t = 768;
  int d_h = 768;
  int heads = 3;
  int d_o = 0;  // 0 means d_h
  int d_s = 0;  // 0 means d_o
  StepVariant step_variant = StepVariant::kGru;

  int fused_dim() const { return d_o > 0 ? d_o : d_h; }
  int state_dim() const { return d_s > 0 ? d_s : fused_dim(); }

  /// Throws ConfigError on non-positive widths or heads not dividing d_h.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

/// Parameters of the full network, in registration order:
/// five projections, four attention blocks, fusion, step network, score head.
template <typename Scalar>
class Model {
 public:
  Model(const ModelConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    Rng rng(seed);
    grounding_ = GroundingParams<Scalar>::make(params_, config_.d_v, config_.d_t, config_.d_h, config_.heads,
                                               config_.fused_dim(), rng);
    step_ = StepNetParams<Scalar>::make(params_, config_.step_variant, config_.fused_dim(), config_.state_dim(), rng);
  }

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return config_; }
  ParameterSet<Scalar>& params() { return params_; }
  const ParameterSet<Scalar>& params() const { return params_; }
  const GroundingParams<Scalar>& grounding() const { return grounding_; }
  const StepNetParams<Scalar>& step_net() const { return step_; }

 private:
  ModelConfig config_;
  ParameterSet<Scalar> params_;
  GroundingParams<Scalar> grounding_;
  StepNetParams<Scalar> step_;
};

/// Per-step outputs of one forward pass over a sample.
template <typename Scalar>
struct SampleForward {
  std::vector<GroundedStep<Scalar>> grounded;
  std::vector<StepScores<Scalar>> steps;
  Var<Scalar> loss;  // mean cross-entropy over steps; only under teacher forcing
};

/// Runs grounding and the step network over every step of `bundle`, carrying
/// state by `mode`. Under teacher forcing, also records the mean per-step
/// cross-entropy loss.
template <typename Scalar>
SampleForward<Scalar> forward_sample(Graph<Scalar>& g, const Model<Scalar>& model, const FeatureBundle& bundle,
                                     CarryMode mode) {
  if (bundle.steps.empty()) throw ContractError("sample '" + bundle.id + "' has no steps");
  const auto& gp = model.grounding();
  auto projected = project(g, bundle, gp);
  auto script_video = attend_script_video(projected.S, projected.V, gp);
  auto state = initial_state(g, model.config().state_dim());
  SampleForward<Scalar> out;
  Var<Scalar> total;
  for (std::size_t t = 0; t < bundle.steps.size(); ++t) {
    const int truth = bundle.steps[t].truth;
    auto grounded = ground_step(projected, script_video, t, gp);
    auto scores = step_scores(grounded.fused, state, model.step_net());
    if (mode == CarryMode::kTeacherForcing) {
      auto ce = cross_entropy(scores.scores, truth);
      total = t == 0 ? ce : add(total, ce);
    }
    state = carry_state(scores, mode, truth, state.step_index);
    out.grounded.push_back(grounded);
    out.steps.push_back(scores);
  }
  if (mode == CarryMode::kTeacherForcing)
    out.loss = scale(total, Scalar(1) / static_cast<Scalar>(bundle.steps.size()));
  return out;
}

/// Teacher-forced mean cross-entropy of one sample.
template <typename Scalar>
Var<Scalar> sample_loss(Graph<Scalar>& g, const Model<Scalar>& model, const FeatureBundle& bundle) {
  return forward_sample(g, model, bundle, CarryMode::kTeacherForcing).loss;
}

/// Greedy-carry scores for every step of a sample, as plain vectors.
template <typename Scalar>
std::vector<std::vector<double>> predict_scores(const Model<Scalar>& model, const FeatureBundle& bundle) {
  Graph<Scalar> g(GradMode::kInference);
  auto fwd = forward_sample(g, model, bundle, CarryMode::kGreedy);
  std::vector<std::vector<double>> out;
  for (const auto& s : fwd.steps) {
    const auto& row = s.scores.value();
    out.emplace_back(row.data(), row.data() + row.size());
  }
  return out;
}

}  // namespace aqtc
