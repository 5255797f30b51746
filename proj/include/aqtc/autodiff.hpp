// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "aqtc/error.hpp"

namespace aqtc {

/// Dense row-major 2-D array; the numeric carrier for every module.
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Index = Eigen::Index;

inline std::string shape_str(Index rows, Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

template <typename Derived>
std::string shape_str(const Eigen::EigenBase<Derived>& m) {
  return shape_str(m.rows(), m.cols());
}

/// A named trainable tensor and its accumulated gradient.
template <typename Scalar>
struct Parameter {
  std::string name;
  Matrix<Scalar> value;
  Matrix<Scalar> grad;
};

/// Ordered registry of parameters. Addresses are stable for the lifetime of
/// the set, so layers may hold raw pointers into it.
template <typename Scalar>
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(const ParameterSet&) = delete;
  ParameterSet& operator=(const ParameterSet&) = delete;
  ParameterSet(ParameterSet&&) noexcept = default;
  ParameterSet& operator=(ParameterSet&&) noexcept = default;

  Parameter<Scalar>& add(std::string name, Matrix<Scalar> value) {
    if (value.size() == 0) throw ShapeError("parameter '" + name + "' is empty");
    if (find(name) != nullptr) throw ContractError("duplicate parameter name '" + name + "'");
    auto p = std::make_unique<Parameter<Scalar>>();
    p->name = std::move(name);
    p->grad = Matrix<Scalar>::Zero(value.rows(), value.cols());
    p->value = std::move(value);
    params_.push_back(std::move(p));
    return *params_.back();
  }

  Parameter<Scalar>* find(std::string_view name) {
    for (auto& p : params_)
      if (p->name == name) return p.get();
    return nullptr;
  }
  const Parameter<Scalar>* find(std::string_view name) const {
    for (const auto& p : params_)
      if (p->name == name) return p.get();
    return nullptr;
  }

  std::size_t size() const { return params_.size(); }
  Parameter<Scalar>& operator[](std::size_t i) { return *params_[i]; }
  const Parameter<Scalar>& operator[](std::size_t i) const { return *params_[i]; }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p->grad.setZero();
  }

  void scale_grad(Scalar factor) {
    for (auto& p : params_) p->grad *= factor;
  }

  std::vector<Matrix<Scalar>> snapshot() const {
    std::vector<Matrix<Scalar>> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back(p->value);
    return out;
  }

  void restore(const std::vector<Matrix<Scalar>>& values) {
    if (values.size() != params_.size()) throw ContractError("snapshot size does not match parameter set");
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (values[i].rows() != params_[i]->value.rows() || values[i].cols() != params_[i]->value.cols())
        throw ShapeError("snapshot shape mismatch for '" + params_[i]->name + "'");
      params_[i]->value = values[i];
    }
  }

 private:
  std::vector<std::unique_ptr<Parameter<Scalar>>> params_;
};

enum class GradMode { kRecord, kInference };

template <typename Scalar>
class Graph;

/// Handle to one node of a Graph.
template <typename Scalar>
class Var {
 public:
  Var() = default;

  const Matrix<Scalar>& value() const { return graph_->value(id_); }
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  Graph<Scalar>& graph() const { return *graph_; }
  std::size_t id() const { return id_; }
  bool requires_grad() const { return graph_->requires_grad(id_); }

 private:
  friend class Graph<Scalar>;
  Var(Graph<Scalar>* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph<Scalar>* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Tape of recorded operations. Nodes are appended in evaluation order, so
/// the recording order is already a topological order and backward() is a
/// single reverse sweep.
template <typename Scalar>
class Graph {
 public:
  using Mat = Matrix<Scalar>;
  // Receives the node's upstream gradient and its own forward value, and
  // pushes contributions to parents through accumulate().
  using BackwardFn = std::function<void(Graph&, const Mat&, const Mat&)>;

  explicit Graph(GradMode mode = GradMode::kRecord) : mode_(mode) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  GradMode mode() const { return mode_; }
  std::size_t size() const { return nodes_.size(); }
  std::size_t last_backward_visits() const { return visits_; }

  Var<Scalar> constant(Mat value) { return push("constant", std::move(value), false, nullptr, nullptr); }

  template <typename Derived>
  Var<Scalar> constant(const Eigen::MatrixBase<Derived>& value) {
    return constant(Mat(value));
  }

  /// Leaf referencing a trainable parameter. Each call makes a fresh leaf;
  /// every leaf flushes into the same Parameter::grad on backward.
  Var<Scalar> parameter(Parameter<Scalar>& p) {
    const bool track = mode_ == GradMode::kRecord;
    return push("parameter", p.value, track, nullptr, track ? &p : nullptr);
  }

  /// Appends an operation result. Throws NonFiniteError naming `op` when the
  /// value contains NaN or Inf. The backward function is dropped when no
  /// parent requires a gradient.
  Var<Scalar> record(const char* op, Mat value, std::initializer_list<Var<Scalar>> parents, BackwardFn fn) {
    bool track = false;
    for (const auto& p : parents) {
      if (p.graph_ != this) throw ContractError(std::string(op) + ": operand belongs to another graph");
      track = track || nodes_[p.id_].requires_grad;
    }
    return push(op, std::move(value), track, track ? std::move(fn) : BackwardFn{}, nullptr);
  }

  Var<Scalar> record(const char* op, Mat value, std::span<const Var<Scalar>> parents, BackwardFn fn) {
    bool track = false;
    for (const auto& p : parents) {
      if (p.graph_ != this) throw ContractError(std::string(op) + ": operand belongs to another graph");
      track = track || nodes_[p.id_].requires_grad;
    }
    return push(op, std::move(value), track, track ? std::move(fn) : BackwardFn{}, nullptr);
  }

  const Mat& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  template <typename Derived>
  void accumulate(std::size_t id, const Eigen::MatrixBase<Derived>& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  /// Reverse sweep from a 1x1 loss node. Parameter leaves add their gradient
  /// into Parameter::grad; parameters outside the loss's ancestry are left
  /// untouched.
  void backward(const Var<Scalar>& loss) {
    if (loss.graph_ != this) throw ContractError("backward: loss belongs to another graph");
    if (mode_ != GradMode::kRecord) throw ContractError("backward: graph was built in inference mode");
    if (consumed_) throw ContractError("backward: graph already consumed");
    const Mat& lv = nodes_[loss.id_].value;
    if (lv.rows() != 1 || lv.cols() != 1)
      throw ContractError("backward: loss must be 1x1, got " + shape_str(lv));
    consumed_ = true;
    visits_ = 0;
    if (!nodes_[loss.id_].requires_grad) return;
    nodes_[loss.id_].grad = Mat::Ones(1, 1);
    for (std::size_t i = loss.id_ + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.grad.size() == 0) continue;
      ++visits_;
      if (n.param != nullptr) {
        n.param->grad += n.grad;
      } else if (n.backward) {
        n.backward(*this, n.grad, n.value);
      }
      n.grad.resize(0, 0);
    }
  }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    BackwardFn backward;
    Parameter<Scalar>* param = nullptr;
    const char* op = "";
  };

  Var<Scalar> push(const char* op, Mat value, bool track, BackwardFn fn, Parameter<Scalar>* param) {
    if (value.size() == 0) throw ShapeError(std::string(op) + ": empty tensor");
    if (!value.allFinite()) throw NonFiniteError(std::string("non-finite value produced by ") + op);
    Node n;
    n.value = std::move(value);
    n.requires_grad = track;
    n.backward = std::move(fn);
    n.param = param;
    n.op = op;
    nodes_.push_back(std::move(n));
    return Var<Scalar>(this, nodes_.size() - 1);
  }

  std::deque<Node> nodes_;
  GradMode mode_;
  bool consumed_ = false;
  std::size_t visits_ = 0;
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

template <typename Scalar>
Var<Scalar> matmul(const Var<Scalar>& a, const Var<Scalar>& b) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul: cannot multiply " + shape_str(a.value()) + " by " + shape_str(b.value()));
  auto& g = a.graph();
  const std::size_t ia = a.id(), ib = b.id();
  Matrix<Scalar> out = a.value() * b.value();
  return g.record("matmul", std::move(out), {a, b}, [ia, ib](Graph<Scalar>& gr, const Matrix<Scalar>& up, const Matrix<Scalar>&) {
    if (gr.requires_grad(ia)) gr.accumulate(ia, up * gr.value(ib).transpose());
    if (gr.requires_grad(ib)) gr.accumulate(ib, gr.value(ia).transpose() * up);
  });
}

namespace detail {
template <typename Scalar>
void require_same_shape(const char* op, const Var<Scalar>& a, const Var<Scalar>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": shape " + shape_str(a.value()) + " vs " + shape_str(b.value()));
}
}  // namespace detail

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_shape("add", a, b);
  const std::size_t ia = a.id(), ib = b.id();
  Matrix<Scalar> out = a.value() + b.value();
  return a.graph().record("add", std::move(out), {a, b}, [ia, ib](Graph<Scalar>& gr, const Matrix<Scalar>& up, const Matrix<Scalar>&) {
    gr.accumulate(ia, up);
    gr.accumulate(ib, up);
  });
}

template <typename Scalar>
Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_shape("sub", a, b);
  const std::size_t ia = a.id(), ib = b.id();
  Matrix<Scalar> out = a.value() - b.value();
  return a.graph().record("sub", std::move(out), {a, b}, [ia, ib](Graph<Scalar>& gr, const Matrix<Scalar>& up, const Matrix<Scalar>&) {
    gr.accumulate(ia, up);
    gr.accumulate(ib, -up);
  });
}

template <typename Scalar>
Var<Scalar> cwise_product(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_shape("cwise_product", a, b);
  const std::size_t ia = a.id(), ib = b.id();
  Matrix<Scalar> out = a.value().cwiseProduct(b.value());
  return a.graph().record("cwise_product", std::move(out), {a, b},
                          [ia, ib](Graph<Scalar>& gr, const Matrix<Scalar>& up, const Matrix<Scalar>&) {
                            if (gr.requires_grad(ia)) gr.accumulate(ia, up.cwiseProduct(gr.value(ib)));
                            if (gr.requires_grad(ib)) gr.accumulate(ib, up.cwiseProduct(gr.value(ia)));
                          });
}

/// x (m x n) plus a 1 x n row added to every row.
template <typename Scalar>
Var<Scalar> add_bias(const Var<Scalar>& x, const Var<Scalar>& bias) {
  if (bias.rows() != 1 || bias.cols() != x.cols())
    throw ShapeError("add_bias: bias " + shape_str(bias.value()) + " does not fit " + shape_str(x.value()));
  const std::size_t ix = x.id(), ib = bias.id();
  Matrix<Scalar> out = x.value().rowwise() + bias.value().row(0);
  return x.graph().record("add_bias", std::move(out), {x, bias}, [ix, ib](Graph<Scalar>& gr, const Matrix<Scalar>& up, const Matrix<Scalar>&) {
    gr.accumulate(ix, up);
    if (gr.requires_grad(ib)) gr.accumulate(ib, up.colwise().sum());
  });
}

/// Stacks a 1 x n row m times.
template <typename Scalar>
Var<Scalar> repeat_rows(const Var<Scalar>& row, Index m) {
  if (row.rows() != 1) throw ShapeError("repeat_rows: expected a single row, got " + shape_str(row.value()));
  if (m < 1) throw ShapeError("repeat_rows: count must be positive");
  const std::size_t ir = row.id();
  Matrix<Scalar> out = row.value().replicate(m, 1);
  return row.graph().record("repeat_rows", std::move(out), {row}, [ir](Graph<Scalar>& gr, const Matrix<Scalar>& up, const Matrix<Scalar>&) {
    gr.accumulate(ir, up.colwise().sum());
  });
}

template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& x, Scalar factor) {
  const std::size_t ix = x.id();
  Matrix<Scalar> out = x.value() * factor;
  return x.graph().record("scale", std::move(out), {x}, [ix, factor](Graph<Scalar>& gr, const Matrix<Scalar>& up, const Matrix<Scalar>&) {
    gr.accumulate(ix, up * factor);
  });
}

template <typename Scalar>
Var<Scalar> transpose(const Var<Scalar>& x) {
  const std::size_t ix = x.id();
  Matrix<Scalar> out = x.value().transpose();
  return x.graph().record("transpose", std::move(out), {x}, [ix](Graph<Scalar>& gr, const Matrix<Scalar>& up, const Matrix<Scalar>&) {
    gr.accumulate(ix, up.transpose());
  });
}

template <typename Scalar>
Var<Scalar> sigmoid(const Var<Scalar>& x) {
  const std::size_t ix = x.id();
  Matrix<Scalar> out = x.value().unaryExpr([](Scalar v) {
    if (v >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-v));
    const Scalar e = std::exp(v);
    return e / (Scalar(1) + e);
  });
  return x.graph().record("sigmoid", std::move(out), {x},
                          [ix](Graph<Scalar>& gr, const Matrix<Scalar>& up, const Matrix<Scalar>& y) {
                            gr.accumulate(ix, up.cwiseProduct(y.cwiseProduct((Scalar(1) - y.array()).matrix())));
                          });
}

template <typename Scalar>
Var<Scalar> tanh(const Var<Scalar>& x) {
  const std::size_t ix = x.id();
  Matrix<Scalar> out = x.value().array().tanh().matrix();
  return x.graph().record("tanh", std::move(out), {x},
                          [ix](Graph<Scalar>& gr, const Matrix<Scalar>& up, const Matrix<Scalar>& y) {
                            gr.accumulate(ix, (up.array() * (Scalar(1) - y.array().square())).matrix());
                          });
}

/// Parametric ReLU with one trainable 1x1 slope: x for x > 0, slope * x otherwise.
template <typename Scalar>
Var<Scalar> prelu(const Var<Scalar>& x, const Var<Scalar>& slope) {
  if (slope.rows() != 1 || slope.cols() != 1)
    throw ShapeError("prelu: slope must be 1x1, got " + shape_str(slope.value()));
  const std::size_t ix = x.id(), is = slope.id();
  const Scalar a = slope.value()(0, 0);
  Matrix<Scalar> out = x.value().unaryExpr([a](Scalar v) { return v > Scalar(0) ? v : a * v; });
  return x.graph().record(
      "prelu", std::move(out), {x, slope}, [ix, is](Graph<Scalar>& gr, const Matrix<Scalar>& up, const Matrix<Scalar>&) {
        const Matrix<Scalar>& xv = gr.value(ix);
        const Scalar a = gr.value(is)(0, 0);
        if (gr.requires_grad(ix)) {
          Matrix<Scalar> mask = xv.unaryExpr([a](Scalar v) { return v > Scalar(0) ? Scalar(1) : a; });
          gr.accumulate(ix, up.cwiseProduct(mask));
        }
        if (gr.requires_grad(is)) {
          Matrix<Scalar> neg = xv.unaryExpr([](Scalar v) { return v > Scalar(0) ? Scalar(0) : v; });
          Matrix<Scalar> ga(1, 1);
          ga(0, 0) = up.cwiseProduct(neg).sum();
          gr.accumulate(is, ga);
        }
      });
}

/// Row-wise softmax, stabilised by subtracting each row's maximum.
template <typename Scalar>
Var<Scalar> softmax_rows(const Var<Scalar>& x) {
  const std::size_t ix = x.id();
  const Matrix<Scalar>& xv = x.value();
  Matrix<Scalar> out(xv.rows(), xv.cols());
  for (Index r = 0; r < xv.rows(); ++r) {
    const Scalar m = xv.row(r).maxCoeff();
    out.row(r) = (xv.row(r).array() - m).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return x.graph().record("softmax_rows", std::move(out), {x},
                          [ix](Graph<Scalar>& gr, const Matrix<Scalar>& up, const Matrix<Scalar>& y) {
                            Matrix<Scalar> inner = up.cwiseProduct(y).rowwise().sum();
                            Matrix<Scalar> gx = y.cwiseProduct((up.colwise() - inner.col(0)));
                            gr.accumulate(ix, gx);
                          });
}

/// Column-wise concatenation in argument order.
template <typename Scalar>
Var<Scalar> concat_cols(std::span<const Var<Scalar>> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  const Index rows = parts[0].rows();
  Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows)
      throw ShapeError("concat_cols: row mismatch " + shape_str(parts[0].value()) + " vs " + shape_str(p.value()));
    cols += p.cols();
  }
  Matrix<Scalar> out(rows, cols);
  std::vector<std::size_t> ids;
  std::vector<Index> widths;
  Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
    ids.push_back(p.id());
    widths.push_back(p.cols());
  }
  return parts[0].graph().record(
      "concat_cols", std::move(out), parts,
      [ids = std::move(ids), widths = std::move(widths)](Graph<Scalar>& gr, const Matrix<Scalar>& up,
                                                         const Matrix<Scalar>&) {
        Index at = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (gr.requires_grad(ids[k])) gr.accumulate(ids[k], up.middleCols(at, widths[k]));
          at += widths[k];
        }
      });
}

template <typename Scalar>
Var<Scalar> concat_cols(std::initializer_list<Var<Scalar>> parts) {
  return concat_cols(std::span<const Var<Scalar>>(parts.begin(), parts.size()));
}

template <typename Scalar>
Var<Scalar> select_row(const Var<Scalar>& x, Index row) {
  if (row < 0 || row >= x.rows())
    throw IndexError("select_row: row " + std::to_string(row) + " outside " + shape_str(x.value()));
  const std::size_t ix = x.id();
  const Index rows = x.rows();
  Matrix<Scalar> out = x.value().row(row);
  return x.graph().record("select_row", std::move(out), {x},
                          [ix, row, rows](Graph<Scalar>& gr, const Matrix<Scalar>& up, const Matrix<Scalar>&) {
                            Matrix<Scalar> g = Matrix<Scalar>::Zero(rows, up.cols());
                            g.row(row) = up.row(0);
                            gr.accumulate(ix, g);
                          });
}

/// Sum of all entries, as a 1x1 tensor.
template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& x) {
  const std::size_t ix = x.id();
  const Index rows = x.rows(), cols = x.cols();
  Matrix<Scalar> out(1, 1);
  out(0, 0) = x.value().sum();
  return x.graph().record("sum", std::move(out), {x},
                          [ix, rows, cols](Graph<Scalar>& gr, const Matrix<Scalar>& up, const Matrix<Scalar>&) {
                            gr.accumulate(ix, Matrix<Scalar>::Constant(rows, cols, up(0, 0)));
                          });
}

/// -log softmax(logits)[truth] for a 1 x j row of logits, via log-sum-exp.
template <typename Scalar>
Var<Scalar> cross_entropy(const Var<Scalar>& logits, Index truth) {
  if (logits.rows() != 1) throw ShapeError("cross_entropy: logits must be one row, got " + shape_str(logits.value()));
  if (truth < 0 || truth >= logits.cols())
    throw IndexError("cross_entropy: truth " + std::to_string(truth) + " outside [0, " +
                     std::to_string(logits.cols()) + ")");
  const std::size_t il = logits.id();
  const auto row = logits.value().row(0);
  Index top = 0;
  const Scalar m = row.maxCoeff(&top);
  // log sum exp(l - m) = log1p(sum over k != top), exact for confident rows.
  Scalar rest = 0;
  for (Index k = 0; k < row.size(); ++k)
    if (k != top) rest += std::exp(row(k) - m);
  const Scalar log_sum = std::log1p(rest);
  const Scalar lse = m + log_sum;
  Matrix<Scalar> out(1, 1);
  out(0, 0) = log_sum - (row(truth) - m);
  return logits.graph().record("cross_entropy", std::move(out), {logits},
                               [il, truth, lse](Graph<Scalar>& gr, const Matrix<Scalar>& up, const Matrix<Scalar>&) {
                                 Matrix<Scalar> p = (gr.value(il).array() - lse).exp().matrix();
                                 p(0, truth) -= Scalar(1);
                                 gr.accumulate(il, p * up(0, 0));
                               });
}

template <typename Scalar>
Var<Scalar> operator+(const Var<Scalar>& a, const Var<Scalar>& b) {
  return add(a, b);
}
template <typename Scalar>
Var<Scalar> operator-(const Var<Scalar>& a, const Var<Scalar>& b) {
  return sub(a, b);
}
template <typename Scalar>
Var<Scalar> operator*(const Var<Scalar>& a, const Var<Scalar>& b) {
  return matmul(a, b);
}
template <typename Scalar>
Var<Scalar> operator*(Scalar s, const Var<Scalar>& x) {
  return scale(x, s);
}

// ---------------------------------------------------------------------------
// Optimiser
// ---------------------------------------------------------------------------

/// Plain SGD: p <- p - lr * g, in place. No momentum, no weight decay.
template <typename Scalar>
void sgd_step(std::span<Matrix<Scalar>> params, std::span<const Matrix<Scalar>> grads, Scalar lr) {
  if (params.size() != grads.size())
    throw ContractError("sgd_step: " + std::to_string(params.size()) + " parameters vs " +
                        std::to_string(grads.size()) + " gradients");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].rows() != grads[i].rows() || params[i].cols() != grads[i].cols())
      throw ContractError("sgd_step: parameter " + std::to_string(i) + " is " + shape_str(params[i]) +
                          " but gradient is " + shape_str(grads[i]));
  }
  for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grads[i];
}

template <typename Scalar>
void sgd_step(ParameterSet<Scalar>& params, Scalar lr) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols())
      throw ContractError("sgd_step: gradient shape mismatch for '" + p.name + "'");
    p.value -= lr * p.grad;
  }
}

}  // namespace aqtc
