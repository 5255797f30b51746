// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "aqtc/autodiff.hpp"
#include "aqtc/layers.hpp"

namespace aqtc {

/// Per-head query/key/value projections (dim -> dim/heads) and a shared
/// output projection (dim -> dim).
template <typename Scalar>
struct AttentionParams {
  Index dim = 0;
  Index heads = 0;
  std::vector<Parameter<Scalar>*> query;
  std::vector<Parameter<Scalar>*> key;
  std::vector<Parameter<Scalar>*> value;
  Parameter<Scalar>* output = nullptr;

  Index head_dim() const { return dim / heads; }

  static AttentionParams make(ParameterSet<Scalar>& params, const std::string& name, Index dim, Index heads,
                              Rng& rng) {
    if (heads < 1 || dim < 1 || dim % heads != 0)
      throw ConfigError("attention '" + name + "': width " + std::to_string(dim) + " is not divisible by " +
                        std::to_string(heads) + " heads");
    AttentionParams a;
    a.dim = dim;
    a.heads = heads;
    const Index hd = dim / heads;
    for (Index h = 0; h < heads; ++h) {
      const std::string prefix = name + ".h" + std::to_string(h);
      a.query.push_back(&params.add(prefix + ".query", uniform_init<Scalar>(dim, hd, dim, rng)));
      a.key.push_back(&params.add(prefix + ".key", uniform_init<Scalar>(dim, hd, dim, rng)));
      a.value.push_back(&params.add(prefix + ".value", uniform_init<Scalar>(dim, hd, dim, rng)));
    }
    a.output = &params.add(name + ".output", uniform_init<Scalar>(dim, dim, dim, rng));
    return a;
  }
};

template <typename Scalar>
struct AttentionOutput {
  Var<Scalar> output;       // n_q x dim
  Var<Scalar> avg_weights;  // n_q x n_k, mean of the per-head softmax weights
};

/// Multi-head scaled dot-product cross-attention. Head i uses
/// softmax((q Wq_i)(k Wk_i)^T / sqrt(dim/heads)) over the keys; head outputs
/// are concatenated and passed through the output projection.
template <typename Scalar>
AttentionOutput<Scalar> attend(const Var<Scalar>& query, const Var<Scalar>& key, const Var<Scalar>& value,
                               const AttentionParams<Scalar>& params) {
  if (params.heads < 1 || params.dim % params.heads != 0)
    throw ConfigError("attend: width " + std::to_string(params.dim) + " is not divisible by " +
                      std::to_string(params.heads) + " heads");
  if (key.rows() != value.rows())
    throw ShapeError("attend: key " + shape_str(key.value()) + " and value " + shape_str(value.value()) +
                     " differ in row count");
  for (const auto* v : {&query, &key, &value}) {
    if (v->cols() != params.dim)
      throw ShapeError("attend: operand " + shape_str(v->value()) + " does not have width " +
                       std::to_string(params.dim));
  }

  auto& g = query.graph();
  const Scalar inv_scale = Scalar(1) / std::sqrt(static_cast<Scalar>(params.head_dim()));
  std::vector<Var<Scalar>> head_out;
  Var<Scalar> weight_sum;
  for (Index h = 0; h < params.heads; ++h) {
    auto q = matmul(query, g.parameter(*params.query[h]));
    auto k = matmul(key, g.parameter(*params.key[h]));
    auto v = matmul(value, g.parameter(*params.value[h]));
    auto w = softmax_rows(scale(matmul(q, transpose(k)), inv_scale));
    head_out.push_back(matmul(w, v));
    weight_sum = h == 0 ? w : add(weight_sum, w);
  }
  auto joined = params.heads == 1 ? head_out[0] : concat_cols<Scalar>(head_out);
  auto avg = params.heads == 1 ? weight_sum : scale(weight_sum, Scalar(1) / static_cast<Scalar>(params.heads));
  return {matmul(joined, g.parameter(*params.output)), avg};
}

}  // namespace aqtc
