// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "aqtc/attention.hpp"
#include "aqtc/features.hpp"
#include "aqtc/layers.hpp"

namespace aqtc {

template <typename Scalar>
struct GroundingParams {
  Mlp<Scalar> project_v;
  Mlp<Scalar> project_s;
  Mlp<Scalar> project_q;
  Mlp<Scalar> project_a;
  Mlp<Scalar> project_i;
  AttentionParams<Scalar> image_answer;    // Attn(I, A, A)
  AttentionParams<Scalar> question;        // Attn(., Q, Q)
  AttentionParams<Scalar> script;          // Attn(., S, S)
  AttentionParams<Scalar> script_video;    // Attn(S, V, V)
  Mlp<Scalar> fusion;                      // [F_v; F_t; I; A] -> d_o

  Index hidden_dim() const { return project_q.out_dim(); }

  static GroundingParams make(ParameterSet<Scalar>& params, Index d_v, Index d_t, Index d_h, Index heads, Index d_o,
                              Rng& rng) {
    if (d_h % heads != 0)
      throw ConfigError("hidden width " + std::to_string(d_h) + " is not divisible by " + std::to_string(heads) +
                        " heads");
    GroundingParams p;
    p.project_v = Mlp<Scalar>::make(params, "proj_v", d_v, d_h, rng);
    p.project_s = Mlp<Scalar>::make(params, "proj_s", d_t, d_h, rng);
    p.project_q = Mlp<Scalar>::make(params, "proj_q", d_t, d_h, rng);
    p.project_a = Mlp<Scalar>::make(params, "proj_a", d_t, d_h, rng);
    p.project_i = Mlp<Scalar>::make(params, "proj_i", d_v, d_h, rng);
    p.image_answer = AttentionParams<Scalar>::make(params, "attn_ia", d_h, heads, rng);
    p.question = AttentionParams<Scalar>::make(params, "attn_q", d_h, heads, rng);
    p.script = AttentionParams<Scalar>::make(params, "attn_s", d_h, heads, rng);
    p.script_video = AttentionParams<Scalar>::make(params, "attn_sv", d_h, heads, rng);
    p.fusion = Mlp<Scalar>::make(params, "fusion", 4 * d_h, d_o, rng);
    return p;
  }
};

template <typename Scalar>
struct ProjectedStep {
  Var<Scalar> A;  // j x d_h
  Var<Scalar> I;  // j x d_h
};

template <typename Scalar>
struct ProjectedBundle {
  Var<Scalar> V;  // f x d_h
  Var<Scalar> S;  // e x d_h
  Var<Scalar> Q;  // 1 x d_h
  std::vector<ProjectedStep<Scalar>> steps;
};

template <typename Scalar>
struct GroundedStep {
  Var<Scalar> text;    // F_t, j x d_h
  Var<Scalar> weights; // W, j x e
  Var<Scalar> video;   // F_v, j x d_h
  Var<Scalar> fused;   // j x d_o
};

namespace detail {
template <typename Scalar>
Var<Scalar> feature_constant(Graph<Scalar>& g, const FeatureMatrix& m) {
  return g.constant(m.template cast<Scalar>());
}

inline void require_width(const char* what, const std::string& id, Index got, Index want) {
  if (got != want)
    throw ConfigError("sample '" + id + "': " + what + " width " + std::to_string(got) + " but model expects " +
                      std::to_string(want));
}
}  // namespace detail

/// Every feature through its own projection MLP into the hidden width.
template <typename Scalar>
ProjectedBundle<Scalar> project(Graph<Scalar>& g, const FeatureBundle& bundle, const GroundingParams<Scalar>& params) {
  detail::require_width("V", bundle.id, bundle.V.cols(), params.project_v.in_dim());
  detail::require_width("S", bundle.id, bundle.S.cols(), params.project_s.in_dim());
  detail::require_width("Q", bundle.id, bundle.Q.cols(), params.project_q.in_dim());
  ProjectedBundle<Scalar> out;
  out.V = params.project_v(detail::feature_constant(g, bundle.V));
  out.S = params.project_s(detail::feature_constant(g, bundle.S));
  out.Q = params.project_q(detail::feature_constant(g, bundle.Q));
  for (const auto& step : bundle.steps) {
    detail::require_width("A", bundle.id, step.A.cols(), params.project_a.in_dim());
    detail::require_width("I", bundle.id, step.I.cols(), params.project_i.in_dim());
    out.steps.push_back({params.project_a(detail::feature_constant(g, step.A)),
                         params.project_i(detail::feature_constant(g, step.I))});
  }
  return out;
}

/// Cascaded text grounding: image-to-answer, then question, then script.
/// Returns F_t and the head-averaged weights of the script stage (j x e).
template <typename Scalar>
std::pair<Var<Scalar>, Var<Scalar>> ground_text(const Var<Scalar>& I, const Var<Scalar>& A, const Var<Scalar>& Q,
                                                const Var<Scalar>& S, const GroundingParams<Scalar>& params) {
  if (I.rows() != A.rows())
    throw ShapeError("ground_text: I " + shape_str(I.value()) + " and A " + shape_str(A.value()) +
                     " differ in candidate count");
  auto stage1 = attend(I, A, A, params.image_answer);
  auto stage2 = attend(stage1.output, Q, Q, params.question);
  auto stage3 = attend(stage2.output, S, S, params.script);
  return {stage3.output, stage3.avg_weights};
}

/// Attn(S, V, V): script sentences attending over video frames (e x d_h).
/// Independent of the step, so callers may compute it once per sample.
template <typename Scalar>
Var<Scalar> attend_script_video(const Var<Scalar>& S, const Var<Scalar>& V, const GroundingParams<Scalar>& params) {
  return attend(S, V, V, params.script_video).output;
}

/// F_v = W * Attn(S, V, V): each candidate's script weights pool the
/// video-attended script rows.
template <typename Scalar>
Var<Scalar> pool_video(const Var<Scalar>& weights, const Var<Scalar>& script_video) {
  if (weights.cols() != script_video.rows())
    throw ShapeError("ground_video: weights " + shape_str(weights.value()) + " do not match " +
                     std::to_string(script_video.rows()) + " script sentences");
  return matmul(weights, script_video);
}

template <typename Scalar>
Var<Scalar> ground_video(const Var<Scalar>& S, const Var<Scalar>& V, const Var<Scalar>& weights,
                         const GroundingParams<Scalar>& params) {
  if (weights.cols() != S.rows())
    throw ShapeError("ground_video: weights " + shape_str(weights.value()) + " do not match " +
                     std::to_string(S.rows()) + " script sentences");
  return pool_video(weights, attend_script_video(S, V, params));
}

template <typename Scalar>
Var<Scalar> fuse(const Var<Scalar>& video, const Var<Scalar>& text, const Var<Scalar>& I, const Var<Scalar>& A,
                 const GroundingParams<Scalar>& params) {
  const Index d = params.hidden_dim();
  for (const auto* v : {&video, &text, &I, &A}) {
    if (v->rows() != video.rows() || v->cols() != d)
      throw ShapeError("fuse: operand " + shape_str(v->value()) + " expected " + shape_str(video.rows(), d));
  }
  return params.fusion(concat_cols<Scalar>({video, text, I, A}));
}

/// Full grounding of one step. `script_video` is attend_script_video() of
/// the same bundle.
template <typename Scalar>
GroundedStep<Scalar> ground_step(const ProjectedBundle<Scalar>& bundle, const Var<Scalar>& script_video,
                                 std::size_t step, const GroundingParams<Scalar>& params) {
  const auto& s = bundle.steps.at(step);
  auto [text, weights] = ground_text(s.I, s.A, bundle.Q, bundle.S, params);
  auto video = pool_video(weights, script_video);
  auto fused = fuse(video, text, s.I, s.A, params);
  return {text, weights, video, fused};
}

}  // namespace aqtc
