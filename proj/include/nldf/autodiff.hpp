#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "nldf/errors.hpp"

namespace nldf::nn {

template <typename S>
using EMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense 2-d value: rows x cols over a flat row-major buffer. Vectors are
/// 1 x n, scalars 1 x 1. float32 for training runs, float64 for gradient
/// checks and oracles; the scalar type is selected by the run config.
template <typename S>
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<S> data;

  Tensor() = default;
  Tensor(int r, int c, S fill = S(0)) : rows(r), cols(c), data(static_cast<size_t>(r) * c, fill) {}

  static Tensor scalar(S v) {
    Tensor t(1, 1);
    t.data[0] = v;
    return t;
  }

  size_t size() const { return data.size(); }
  bool same_shape(const Tensor& other) const {
    return rows == other.rows && cols == other.cols;
  }

  Eigen::Map<EMat<S>> mat() { return {data.data(), rows, cols}; }
  Eigen::Map<const EMat<S>> mat() const { return {data.data(), rows, cols}; }

  void set_zero() { std::fill(data.begin(), data.end(), S(0)); }

  bool all_finite() const {
    for (S v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }
};

/// Learnable tensor with gradient and Adam state. Gradients accumulate
/// across backward passes until zero_grad().
template <typename S>
struct Parameter {
  std::string name;
  Tensor<S> value;
  Tensor<S> grad;
  Tensor<S> adam_m;
  Tensor<S> adam_v;
  std::int64_t step = 0;

  Parameter() = default;
  Parameter(std::string n, int rows, int cols)
      : name(std::move(n)), value(rows, cols), grad(rows, cols), adam_m(rows, cols),
        adam_v(rows, cols) {}

  void zero_grad() { grad.set_zero(); }
};

/// When enabled, every tape op verifies its output is finite and throws
/// DomainError otherwise. Off by default; tests and debug runs turn it on.
void set_check_finite(bool enabled);
bool check_finite_enabled();

using NodeId = int;

/// Reverse-mode tape over Tensor values. Nodes only reference earlier nodes,
/// so reverse creation order is a topological order; gradient accumulation
/// within one backward pass is additive in that fixed order.
template <typename S>
class Tape {
 public:
  struct Node {
    Tensor<S> value;
    Tensor<S> grad;
    std::function<void(Tape&, NodeId)> backward;  // null for leaves
    Parameter<S>* param = nullptr;
  };

  void reset() { nodes_.clear(); }
  int size() const { return static_cast<int>(nodes_.size()); }

  const Tensor<S>& value(NodeId id) const { return nodes_[static_cast<size_t>(id)].value; }
  const Tensor<S>& grad(NodeId id) const { return nodes_[static_cast<size_t>(id)].grad; }

  NodeId leaf(Tensor<S> v) { return push(std::move(v), nullptr, nullptr); }

  /// Leaf tied to a parameter; after backward() the node gradient is added
  /// into p.grad.
  NodeId param(Parameter<S>& p) {
    Tensor<S> copy = p.value;
    return push(std::move(copy), nullptr, &p);
  }

  /// Escape hatch for tests and custom ops: caller supplies the backward rule.
  NodeId custom(Tensor<S> value, std::function<void(Tape&, NodeId)> backward) {
    return push(std::move(value), std::move(backward), nullptr);
  }

  // y = x W^T
  NodeId matmul_nt(NodeId x, NodeId w) {
    const auto& xv = value(x);
    const auto& wv = value(w);
    if (xv.cols != wv.cols) throw DomainError("matmul_nt: inner dimension mismatch");
    Tensor<S> out(xv.rows, wv.rows);
    out.mat().noalias() = xv.mat() * wv.mat().transpose();
    return push(std::move(out), [x, w](Tape& t, NodeId self) {
      const auto g = t.grad_map(self);
      t.grad_at(x).noalias() += g * t.value_map(w);
      t.grad_at(w).noalias() += g.transpose() * t.value_map(x);
    });
  }

  // y = x w
  NodeId matmul_nn(NodeId x, NodeId w) {
    const auto& xv = value(x);
    const auto& wv = value(w);
    if (xv.cols != wv.rows) throw DomainError("matmul_nn: inner dimension mismatch");
    Tensor<S> out(xv.rows, wv.cols);
    out.mat().noalias() = xv.mat() * wv.mat();
    return push(std::move(out), [x, w](Tape& t, NodeId self) {
      const auto g = t.grad_map(self);
      t.grad_at(x).noalias() += g * t.value_map(w).transpose();
      t.grad_at(w).noalias() += t.value_map(x).transpose() * g;
    });
  }

  // y = x^T w
  NodeId matmul_tn(NodeId x, NodeId w) {
    const auto& xv = value(x);
    const auto& wv = value(w);
    if (xv.rows != wv.rows) throw DomainError("matmul_tn: inner dimension mismatch");
    Tensor<S> out(xv.cols, wv.cols);
    out.mat().noalias() = xv.mat().transpose() * wv.mat();
    return push(std::move(out), [x, w](Tape& t, NodeId self) {
      const auto g = t.grad_map(self);
      t.grad_at(x).noalias() += t.value_map(w) * g.transpose();
      t.grad_at(w).noalias() += t.value_map(x) * g;
    });
  }

  NodeId add(NodeId x, NodeId y) {
    const auto& xv = value(x);
    const auto& yv = value(y);
    if (!xv.same_shape(yv)) throw DomainError("add: shape mismatch");
    Tensor<S> out(xv.rows, xv.cols);
    out.mat() = xv.mat() + yv.mat();
    return push(std::move(out), [x, y](Tape& t, NodeId self) {
      const auto g = t.grad_map(self);
      t.grad_at(x) += g;
      t.grad_at(y) += g;
    });
  }

  NodeId sub(NodeId x, NodeId y) {
    const auto& xv = value(x);
    const auto& yv = value(y);
    if (!xv.same_shape(yv)) throw DomainError("sub: shape mismatch");
    Tensor<S> out(xv.rows, xv.cols);
    out.mat() = xv.mat() - yv.mat();
    return push(std::move(out), [x, y](Tape& t, NodeId self) {
      const auto g = t.grad_map(self);
      t.grad_at(x) += g;
      t.grad_at(y) -= g;
    });
  }

  // y = x + b, b broadcast over rows
  NodeId add_rowvec(NodeId x, NodeId b) {
    const auto& xv = value(x);
    const auto& bv = value(b);
    if (bv.rows != 1 || bv.cols != xv.cols) throw DomainError("add_rowvec: bias shape mismatch");
    Tensor<S> out(xv.rows, xv.cols);
    out.mat() = xv.mat().rowwise() + bv.mat().row(0);
    return push(std::move(out), [x, b](Tape& t, NodeId self) {
      const auto g = t.grad_map(self);
      t.grad_at(x) += g;
      t.grad_at(b).row(0) += g.colwise().sum();
    });
  }

  NodeId scale(NodeId x, double factor) {
    const auto& xv = value(x);
    Tensor<S> out(xv.rows, xv.cols);
    out.mat() = xv.mat() * static_cast<S>(factor);
    return push(std::move(out), [x, factor](Tape& t, NodeId self) {
      t.grad_at(x) += t.grad_map(self) * static_cast<S>(factor);
    });
  }

  NodeId leaky_relu(NodeId x, double slope) {
    const auto& xv = value(x);
    Tensor<S> out(xv.rows, xv.cols);
    const S a = static_cast<S>(slope);
    for (size_t i = 0; i < xv.size(); ++i) {
      const S v = xv.data[i];
      out.data[i] = v > S(0) ? v : a * v;
    }
    return push(std::move(out), [x, a](Tape& t, NodeId self) {
      const auto& xv = t.value(x);
      const auto& g = t.grad(self);
      auto& gx = t.node(x).grad;
      for (size_t i = 0; i < xv.size(); ++i)
        gx.data[i] += g.data[i] * (xv.data[i] > S(0) ? S(1) : a);
    });
  }

  NodeId sigmoid(NodeId x) {
    const auto& xv = value(x);
    Tensor<S> out(xv.rows, xv.cols);
    for (size_t i = 0; i < xv.size(); ++i) {
      const double v = static_cast<double>(xv.data[i]);
      const double y = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
      out.data[i] = static_cast<S>(y);
    }
    return push(std::move(out), [x](Tape& t, NodeId self) {
      const auto& yv = t.value(self);
      const auto& g = t.grad(self);
      auto& gx = t.node(x).grad;
      for (size_t i = 0; i < yv.size(); ++i) {
        const S y = yv.data[i];
        gx.data[i] += g.data[i] * y * (S(1) - y);
      }
    });
  }

  // [n x gm] -> [n x g]: sums m groups of g contiguous columns.
  NodeId group_sum_cols(NodeId x, int groups) {
    const auto& xv = value(x);
    if (groups < 1 || xv.cols % groups != 0)
      throw DomainError("group_sum_cols: group count must divide columns");
    const int out_cols = xv.cols / groups;
    Tensor<S> out(xv.rows, out_cols);
    out.set_zero();
    for (int r = 0; r < xv.rows; ++r)
      for (int i = 0; i < groups; ++i)
        for (int c = 0; c < out_cols; ++c)
          out.data[static_cast<size_t>(r) * out_cols + c] +=
              xv.data[static_cast<size_t>(r) * xv.cols + i * out_cols + c];
    return push(std::move(out), [x, groups](Tape& t, NodeId self) {
      const auto& g = t.grad(self);
      auto& gx = t.node(x).grad;
      const int out_cols = g.cols;
      for (int r = 0; r < g.rows; ++r)
        for (int i = 0; i < groups; ++i)
          for (int c = 0; c < out_cols; ++c)
            gx.data[static_cast<size_t>(r) * gx.cols + i * out_cols + c] +=
                g.data[static_cast<size_t>(r) * out_cols + c];
    });
  }

  // [1 x d] -> [n x d]
  NodeId broadcast_rows(NodeId v, int n) {
    const auto& vv = value(v);
    if (vv.rows != 1) throw DomainError("broadcast_rows: input must be a row vector");
    Tensor<S> out(n, vv.cols);
    out.mat() = vv.mat().row(0).replicate(n, 1);
    return push(std::move(out), [v](Tape& t, NodeId self) {
      t.grad_at(v).row(0) += t.grad_map(self).colwise().sum();
    });
  }

  NodeId concat_cols(NodeId x, NodeId y) {
    const auto& xv = value(x);
    const auto& yv = value(y);
    if (xv.rows != yv.rows) throw DomainError("concat_cols: row mismatch");
    Tensor<S> out(xv.rows, xv.cols + yv.cols);
    out.mat().leftCols(xv.cols) = xv.mat();
    out.mat().rightCols(yv.cols) = yv.mat();
    const int xc = xv.cols;
    const int yc = yv.cols;
    return push(std::move(out), [x, y, xc, yc](Tape& t, NodeId self) {
      const auto g = t.grad_map(self);
      t.grad_at(x) += g.leftCols(xc);
      t.grad_at(y) += g.rightCols(yc);
    });
  }

  // Softmax down a column vector [m x 1].
  NodeId softmax_col(NodeId x) {
    const auto& xv = value(x);
    if (xv.cols != 1) throw DomainError("softmax_col: expected a column vector");
    Tensor<S> out(xv.rows, 1);
    S max_v = xv.data[0];
    for (S v : xv.data) max_v = std::max(max_v, v);
    double total = 0.0;
    for (size_t i = 0; i < xv.size(); ++i) {
      const double e = std::exp(static_cast<double>(xv.data[i] - max_v));
      out.data[i] = static_cast<S>(e);
      total += e;
    }
    for (auto& v : out.data) v = static_cast<S>(static_cast<double>(v) / total);
    return push(std::move(out), [x](Tape& t, NodeId self) {
      const auto& y = t.value(self);
      const auto& g = t.grad(self);
      auto& gx = t.node(x).grad;
      double dot = 0.0;
      for (size_t i = 0; i < y.size(); ++i)
        dot += static_cast<double>(y.data[i]) * static_cast<double>(g.data[i]);
      for (size_t i = 0; i < y.size(); ++i)
        gx.data[i] += y.data[i] * (g.data[i] - static_cast<S>(dot));
    });
  }

  /// (1/rows) * sum of squares: per-row sum over columns, mean over rows.
  NodeId row_sumsq_mean(NodeId x) {
    const auto& xv = value(x);
    double acc = 0.0;
    for (S v : xv.data) acc += static_cast<double>(v) * static_cast<double>(v);
    Tensor<S> out = Tensor<S>::scalar(static_cast<S>(acc / xv.rows));
    return push(std::move(out), [x](Tape& t, NodeId self) {
      const S g = t.grad(self).data[0];
      const auto& xv = t.value(x);
      const S k = S(2) * g / static_cast<S>(xv.rows);
      auto& gx = t.node(x).grad;
      for (size_t i = 0; i < xv.size(); ++i) gx.data[i] += k * xv.data[i];
    });
  }

  /// Mean of squares over all elements.
  NodeId mean_sq(NodeId x) {
    const auto& xv = value(x);
    double acc = 0.0;
    for (S v : xv.data) acc += static_cast<double>(v) * static_cast<double>(v);
    Tensor<S> out = Tensor<S>::scalar(static_cast<S>(acc / static_cast<double>(xv.size())));
    return push(std::move(out), [x](Tape& t, NodeId self) {
      const S g = t.grad(self).data[0];
      const auto& xv = t.value(x);
      const S k = S(2) * g / static_cast<S>(xv.size());
      auto& gx = t.node(x).grad;
      for (size_t i = 0; i < xv.size(); ++i) gx.data[i] += k * xv.data[i];
    });
  }

  /// MSE with mean reduction over all elements.
  NodeId mse(NodeId pred, NodeId target) { return mean_sq(sub(pred, target)); }

  /// Seeds d(loss)/d(loss) = 1, propagates through the tape in reverse
  /// creation order, then adds each parameter node's gradient into its
  /// Parameter::grad. The loss must be scalar.
  void backward(NodeId loss) {
    auto& loss_node = node(loss);
    if (loss_node.value.rows != 1 || loss_node.value.cols != 1)
      throw DomainError("backward: loss must be a scalar");
    for (auto& n : nodes_) {
      n.grad = Tensor<S>(n.value.rows, n.value.cols);
    }
    loss_node.grad.data[0] = S(1);
    for (NodeId id = loss; id >= 0; --id) {
      auto& n = node(id);
      if (n.backward) n.backward(*this, id);
    }
    for (auto& n : nodes_) {
      if (n.param) n.param->grad.mat() += n.grad.mat();
    }
  }

  Node& node(NodeId id) { return nodes_[static_cast<size_t>(id)]; }
  Eigen::Map<EMat<S>> grad_at(NodeId id) { return node(id).grad.mat(); }
  Eigen::Map<const EMat<S>> grad_map(NodeId id) const {
    return nodes_[static_cast<size_t>(id)].grad.mat();
  }
  Eigen::Map<const EMat<S>> value_map(NodeId id) const {
    return nodes_[static_cast<size_t>(id)].value.mat();
  }

 private:
  NodeId push(Tensor<S> value, std::function<void(Tape&, NodeId)> backward,
              Parameter<S>* param = nullptr) {
    if (check_finite_enabled() && !value.all_finite())
      throw DomainError("tape op produced a non-finite value");
    Node n;
    n.value = std::move(value);
    n.backward = std::move(backward);
    n.param = param;
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
};

}  // namespace nldf::nn
