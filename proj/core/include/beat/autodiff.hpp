#pragma once

// Tape-based reverse-mode automatic differentiation over dense tensors.
//
// A Graph records every operation eagerly: values are computed when an op is
// created, and `backward` walks the tape in reverse creation order, which is
// a valid topological order since parents always precede their children.
// Only nodes that depend on a parameter leaf take part in the backward pass.

#include <functional>
#include <memory>
#include <vector>

#include "beat/tensor.hpp"

namespace beat::ad {

class Graph;

// Lightweight handle to a node of a Graph. Copyable; valid while the Graph lives.
class Var {
 public:
  Var() = default;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph& graph() const { return *graph_; }
  std::size_t id() const noexcept { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Leaf that receives a gradient during backward.
  Var parameter(Tensor value);
  // Leaf treated as a constant.
  Var constant(Tensor value);

  // Seeds d(root)/d(root) = 1 and accumulates gradients into every node that
  // depends on a parameter leaf. Root must hold exactly one element.
  void backward(Var root);

  // Gradient of the last backward root with respect to `v`. Leaves the root
  // does not reach get a zero gradient. Throws if backward has not run.
  const Tensor& grad(Var v) const;

  const Tensor& value(Var v) const { return nodes_.at(v.id()).value; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Backward closure: receives the node's output gradient and returns nothing;
  // it adds into the parents' gradient buffers through `parent_grad`.
  using BackwardFn = std::function<void(Graph&, std::size_t self)>;
  Var record(Tensor value, std::vector<std::size_t> parents, BackwardFn backward);
  Tensor& grad_buffer(std::size_t id);
  const Tensor& value_of(std::size_t id) const { return nodes_[id].value; }
  const Tensor& grad_of(std::size_t id) const { return nodes_[id].grad; }
  bool tracks(std::size_t id) const { return nodes_[id].requires_grad; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// ----- operations -------------------------------------------------------
// Shapes: matrices are rank-2 [rows, cols]; "rows" below means axis 0.

Var matmul(Var a, Var b);
// Element-wise add. `b` may also be a rank-1 row vector broadcast over rows of `a`.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
// x[B,in] * W[in,out] + b[out]
Var affine(Var x, Var weight, Var bias);
Var relu(Var a);
Var tanh(Var a);
// Reductions over all elements -> shape [1].
Var sum(Var a);
Var mean(Var a);
// Row-wise reductions of a [B,C] matrix -> shape [B].
Var logsumexp(Var a);
Var row_mean(Var a);
// a[r, labels[r]] -> shape [B].
Var select(Var a, std::vector<int> labels);
// Per-row softmax cross-entropy of logits [B,C] against integer labels -> [B].
Var softmax_ce(Var logits, std::vector<int> labels);

// ----- gradient checking ------------------------------------------------

using ScalarFn = std::function<Var(Graph&, Var)>;

// Max over components of |analytic - central difference| / (|analytic| + 1e-12)
// for a scalar-valued function of one tensor argument.
double grad_check(const ScalarFn& fn, const Tensor& point, double step);

// Convenience: value and gradient of a scalar function at a point.
struct ValueAndGrad {
  double value;
  Tensor grad;
};
ValueAndGrad value_and_grad(const ScalarFn& fn, const Tensor& point);

}  // namespace beat::ad
