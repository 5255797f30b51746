// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <string>

#include "aqtc/autodiff.hpp"
#include "aqtc/rng.hpp"

namespace aqtc {

inline constexpr double kPreluInitialSlope = 0.25;

/// Uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)], drawn row-major.
template <typename Scalar>
Matrix<Scalar> uniform_init(Index rows, Index cols, Index fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Matrix<Scalar> m(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = static_cast<Scalar>(rng.uniform(-bound, bound));
  return m;
}

/// Affine map x * W + b with W of shape in x out.
template <typename Scalar>
struct Linear {
  Parameter<Scalar>* weight = nullptr;
  Parameter<Scalar>* bias = nullptr;

  Index in_dim() const { return weight->value.rows(); }
  Index out_dim() const { return weight->value.cols(); }

  static Linear make(ParameterSet<Scalar>& params, const std::string& name, Index in, Index out, Rng& rng) {
    Linear l;
    l.weight = &params.add(name + ".weight", uniform_init<Scalar>(in, out, in, rng));
    l.bias = &params.add(name + ".bias", Matrix<Scalar>::Zero(1, out));
    return l;
  }

  Var<Scalar> operator()(const Var<Scalar>& x) const {
    if (x.cols() != in_dim())
      throw ShapeError("linear '" + weight->name + "': input " + shape_str(x.value()) + " but layer expects width " +
                       std::to_string(in_dim()));
    auto& g = x.graph();
    return add_bias(matmul(x, g.parameter(*weight)), g.parameter(*bias));
  }
};

/// Input linear layer followed by two linear+PReLU layers; hidden width equals
/// output width. Each PReLU owns one scalar slope.
template <typename Scalar>
struct Mlp {
  Linear<Scalar> input;
  Linear<Scalar> hidden;
  Linear<Scalar> output;
  Parameter<Scalar>* hidden_slope = nullptr;
  Parameter<Scalar>* output_slope = nullptr;

  Index in_dim() const { return input.in_dim(); }
  Index out_dim() const { return output.out_dim(); }

  static Mlp make(ParameterSet<Scalar>& params, const std::string& name, Index in, Index out, Rng& rng) {
    Mlp m;
    m.input = Linear<Scalar>::make(params, name + ".l0", in, out, rng);
    m.hidden = Linear<Scalar>::make(params, name + ".l1", out, out, rng);
    m.hidden_slope = &params.add(name + ".l1.prelu", Matrix<Scalar>::Constant(1, 1, Scalar(kPreluInitialSlope)));
    m.output = Linear<Scalar>::make(params, name + ".l2", out, out, rng);
    m.output_slope = &params.add(name + ".l2.prelu", Matrix<Scalar>::Constant(1, 1, Scalar(kPreluInitialSlope)));
    return m;
  }

  Var<Scalar> operator()(const Var<Scalar>& x) const {
    auto& g = x.graph();
    auto h = input(x);
    h = prelu(hidden(h), g.parameter(*hidden_slope));
    return prelu(output(h), g.parameter(*output_slope));
  }
};

}  // namespace aqtc
