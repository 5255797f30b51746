// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "aqtc/autodiff.hpp"
#include "aqtc/layers.hpp"

namespace aqtc {

enum class StepVariant { kGru, kMlp };

std::string to_string(StepVariant v);
StepVariant parse_step_variant(const std::string& s);

template <typename Scalar>
struct GruParams {
  // Each of update (z), reset (r) and candidate (h): W is d_o x d_s, U is d_s x d_s.
  Parameter<Scalar>* w_update = nullptr;
  Parameter<Scalar>* u_update = nullptr;
  Parameter<Scalar>* b_update = nullptr;
  Parameter<Scalar>* w_reset = nullptr;
  Parameter<Scalar>* u_reset = nullptr;
  Parameter<Scalar>* b_reset = nullptr;
  Parameter<Scalar>* w_cand = nullptr;
  Parameter<Scalar>* u_cand = nullptr;
  Parameter<Scalar>* b_cand = nullptr;

  Index input_dim() const { return w_update->value.rows(); }
  Index state_dim() const { return u_update->value.rows(); }

  static GruParams make(ParameterSet<Scalar>& params, const std::string& name, Index d_in, Index d_s, Rng& rng) {
    GruParams p;
    auto gate = [&](const std::string& g, Parameter<Scalar>*& w, Parameter<Scalar>*& u, Parameter<Scalar>*& b) {
      w = &params.add(name + "." + g + ".w", uniform_init<Scalar>(d_in, d_s, d_in, rng));
      u = &params.add(name + "." + g + ".u", uniform_init<Scalar>(d_s, d_s, d_s, rng));
      b = &params.add(name + "." + g + ".b", Matrix<Scalar>::Zero(1, d_s));
    };
    gate("update", p.w_update, p.u_update, p.b_update);
    gate("reset", p.w_reset, p.u_reset, p.b_reset);
    gate("cand", p.w_cand, p.u_cand, p.b_cand);
    return p;
  }
};

template <typename Scalar>
struct StepNetParams {
  StepVariant variant = StepVariant::kGru;
  GruParams<Scalar> gru;   // used when variant == kGru
  Mlp<Scalar> mlp;         // [x; h] -> d_s, used when variant == kMlp
  Linear<Scalar> score;    // d_s -> 1

  Index input_dim() const { return variant == StepVariant::kGru ? gru.input_dim() : mlp.in_dim() - state_dim(); }
  Index state_dim() const { return score.in_dim(); }

  static StepNetParams make(ParameterSet<Scalar>& params, StepVariant variant, Index d_o, Index d_s, Rng& rng) {
    StepNetParams p;
    p.variant = variant;
    if (variant == StepVariant::kGru) {
      p.gru = GruParams<Scalar>::make(params, "step_gru", d_o, d_s, rng);
    } else {
      p.mlp = Mlp<Scalar>::make(params, "step_mlp", d_o + d_s, d_s, rng);
    }
    p.score = Linear<Scalar>::make(params, "score", d_s, 1, rng);
    return p;
  }
};

/// State carried from the chosen candidate of one step into the next.
template <typename Scalar>
struct StepState {
  Var<Scalar> h;  // 1 x d_s
  int step_index = 0;
};

template <typename Scalar>
StepState<Scalar> initial_state(Graph<Scalar>& g, Index d_s) {
  return {g.constant(Matrix<Scalar>::Zero(1, d_s)), 0};
}

/// Row-batched GRU cell: every row of x is paired with the same state row h.
///   z = sigmoid(x Wz + h Uz + bz), r = sigmoid(x Wr + h Ur + br)
///   c = tanh(x Wh + (r . h) Uh + bh),  h' = (1 - z) . h + z . c
template <typename Scalar>
Var<Scalar> gru_cell(const Var<Scalar>& x, const Var<Scalar>& h, const GruParams<Scalar>& p) {
  if (x.cols() != p.input_dim())
    throw ShapeError("gru_cell: input " + shape_str(x.value()) + " but cell expects width " +
                     std::to_string(p.input_dim()));
  if (h.rows() != 1 || h.cols() != p.state_dim())
    throw ShapeError("gru_cell: state " + shape_str(h.value()) + " but cell expects 1x" +
                     std::to_string(p.state_dim()));
  auto& g = x.graph();
  const Index n = x.rows();
  auto gate = [&](Parameter<Scalar>* w, Parameter<Scalar>* u, Parameter<Scalar>* b) {
    auto hu = add_bias(matmul(h, g.parameter(*u)), g.parameter(*b));
    return add_bias(matmul(x, g.parameter(*w)), hu);
  };
  auto z = sigmoid(gate(p.w_update, p.u_update, p.b_update));
  auto r = sigmoid(gate(p.w_reset, p.u_reset, p.b_reset));
  auto hh = n == 1 ? h : repeat_rows(h, n);
  auto rh = matmul(cwise_product(r, hh), g.parameter(*p.u_cand));
  auto c = tanh(add_bias(add(matmul(x, g.parameter(*p.w_cand)), rh), g.parameter(*p.b_cand)));
  // (1 - z) . h + z . c  ==  h + z . (c - h)
  return add(hh, cwise_product(z, sub(c, hh)));
}

template <typename Scalar>
struct StepScores {
  Var<Scalar> scores;  // 1 x j raw logits
  Var<Scalar> states;  // j x d_s, row c is candidate c's next state
};

template <typename Scalar>
StepScores<Scalar> step_scores(const Var<Scalar>& fused, const StepState<Scalar>& prev, const StepNetParams<Scalar>& p) {
  if (prev.h.rows() != 1 || prev.h.cols() != p.state_dim())
    throw ShapeError("step_scores: state " + shape_str(prev.h.value()) + " but network expects 1x" +
                     std::to_string(p.state_dim()));
  if (fused.cols() != p.input_dim())
    throw ShapeError("step_scores: fused input " + shape_str(fused.value()) + " but network expects width " +
                     std::to_string(p.input_dim()));
  Var<Scalar> states;
  if (p.variant == StepVariant::kGru) {
    states = gru_cell(fused, prev.h, p.gru);
  } else {
    auto hh = repeat_rows(prev.h, fused.rows());
    states = p.mlp(concat_cols<Scalar>({fused, hh}));
  }
  return {transpose(p.score(states)), states};
}

enum class CarryMode { kTeacherForcing, kGreedy };

/// Greedy choice: the highest score, earliest index on ties.
template <typename Derived>
Index argmax_first(const Eigen::MatrixBase<Derived>& scores) {
  Index best = 0;
  for (Index k = 1; k < scores.size(); ++k)
    if (scores(k) > scores(best)) best = k;
  return best;
}

/// Picks the state that survives into the next step: states[truth] under
/// teacher forcing, states[argmax score] when greedy.
template <typename Scalar>
StepState<Scalar> carry_state(const StepScores<Scalar>& step, CarryMode mode, Index truth, int step_index) {
  const Index j = step.states.rows();
  Index chosen = 0;
  if (mode == CarryMode::kTeacherForcing) {
    if (truth < 0 || truth >= j)
      throw IndexError("carry_state: truth " + std::to_string(truth) + " outside [0, " + std::to_string(j) + ")");
    chosen = truth;
  } else {
    chosen = argmax_first(step.scores.value().row(0));
  }
  return {select_row(step.states, chosen), step_index + 1};
}

}  // namespace aqtc
