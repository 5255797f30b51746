// SPDX-License-Identifier: Apache-2.0

// Plain-Eigen re-implementations used as independent oracles. Nothing here
// touches the autodiff graph.

#pragma once

#include <cmath>
#include <utility>

#include "aqtc/attention.hpp"
#include "aqtc/layers.hpp"
#include "aqtc/rng.hpp"
#include "aqtc/step_network.hpp"

namespace aqtc::reference {

using Md = Matrix<double>;

inline Md random(Rng& rng, Index rows, Index cols) {
  Md m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

inline Md softmax(const Md& x) {
  Md out(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    double m = x(r, 0);
    for (Index c = 1; c < x.cols(); ++c) m = std::max(m, x(r, c));
    double total = 0;
    for (Index c = 0; c < x.cols(); ++c) total += out(r, c) = std::exp(x(r, c) - m);
    for (Index c = 0; c < x.cols(); ++c) out(r, c) /= total;
  }
  return out;
}

inline Md prelu(const Md& x, double slope) {
  Md out = x;
  for (Index i = 0; i < out.size(); ++i)
    if (out.data()[i] <= 0) out.data()[i] *= slope;
  return out;
}

inline Md linear(const Md& x, const Linear<double>& l) {
  Md out = x * l.weight->value;
  for (Index r = 0; r < out.rows(); ++r) out.row(r) += l.bias->value.row(0);
  return out;
}

inline Md mlp(const Md& x, const Mlp<double>& m) {
  Md h = linear(x, m.input);
  h = prelu(linear(h, m.hidden), m.hidden_slope->value(0, 0));
  return prelu(linear(h, m.output), m.output_slope->value(0, 0));
}

/// Returns (output, head-averaged weights).
inline std::pair<Md, Md> attention(const Md& q, const Md& k, const Md& v, const AttentionParams<double>& p) {
  const Index hd = p.dim / p.heads;
  Md joined(q.rows(), p.dim);
  Md avg = Md::Zero(q.rows(), k.rows());
  for (Index h = 0; h < p.heads; ++h) {
    const Md qh = q * p.query[h]->value;
    const Md kh = k * p.key[h]->value;
    const Md vh = v * p.value[h]->value;
    const Md w = softmax((qh * kh.transpose()) / std::sqrt(static_cast<double>(hd)));
    joined.middleCols(h * hd, hd) = w * vh;
    avg += w;
  }
  avg /= static_cast<double>(p.heads);
  return {joined * p.output->value, avg};
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// One GRU update for a single input row, written gate by gate.
inline Md gru(const Md& x, const Md& h, const GruParams<double>& p) {
  const Index n = h.cols();
  Md out(1, n);
  const Md zx = x * p.w_update->value + h * p.u_update->value + p.b_update->value;
  const Md rx = x * p.w_reset->value + h * p.u_reset->value + p.b_reset->value;
  Md r(1, n), z(1, n);
  for (Index c = 0; c < n; ++c) {
    z(0, c) = sigmoid(zx(0, c));
    r(0, c) = sigmoid(rx(0, c));
  }
  const Md cand_pre = x * p.w_cand->value + r.cwiseProduct(h) * p.u_cand->value + p.b_cand->value;
  for (Index c = 0; c < n; ++c) out(0, c) = (1 - z(0, c)) * h(0, c) + z(0, c) * std::tanh(cand_pre(0, c));
  return out;
}

/// Identity projections: head h sees columns [h*d/heads, (h+1)*d/heads).
template <typename Scalar>
void set_identity(AttentionParams<Scalar>& p) {
  const Index hd = p.dim / p.heads;
  const Matrix<Scalar> eye = Matrix<Scalar>::Identity(p.dim, p.dim);
  for (Index h = 0; h < p.heads; ++h) {
    p.query[h]->value = eye.middleCols(h * hd, hd);
    p.key[h]->value = eye.middleCols(h * hd, hd);
    p.value[h]->value = eye.middleCols(h * hd, hd);
  }
  p.output->value = eye;
}

}  // namespace aqtc::reference
