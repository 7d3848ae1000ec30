#include "beat/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "beat/error.hpp"

namespace beat::ad {

namespace {

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " +
                   shape_str(b));
}

void require_matrix(const char* op, const Tensor& t) {
  if (t.rank() != 2)
    throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_str(t.shape()));
}

bool same_graph(Var a, Var b) { return &a.graph() == &b.graph(); }

void require_same_graph(const char* op, Var a, Var b) {
  if (!same_graph(a, b)) throw Error("graph", std::string(op) + ": operands live in different graphs");
}

// Row-broadcast compatibility: b is [cols] and a is [rows, cols].
bool row_broadcast(const Shape& a, const Shape& b) {
  return a.size() == 2 && b.size() == 1 && a[1] == b[0];
}

}  // namespace

const Tensor& Var::value() const { return graph_->value(*this); }

Var Graph::parameter(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, true});
  backward_done_ = false;
  return Var(this, nodes_.size() - 1);
}

Var Graph::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false});
  return Var(this, nodes_.size() - 1);
}

Var Graph::record(Tensor value, std::vector<std::size_t> parents, BackwardFn backward) {
  bool tracked = std::any_of(parents.begin(), parents.end(),
                             [this](std::size_t p) { return nodes_[p].requires_grad; });
  nodes_.push_back(Node{std::move(value), {}, std::move(parents),
                        tracked ? std::move(backward) : nullptr, tracked});
  backward_done_ = false;
  return Var(this, nodes_.size() - 1);
}

Tensor& Graph::grad_buffer(std::size_t id) { return nodes_[id].grad; }

void Graph::backward(Var root) {
  if (&root.graph() != this) throw Error("graph", "backward: root belongs to another graph");
  const std::size_t r = root.id();
  if (nodes_[r].value.size() != 1)
    throw ShapeError("backward: root must be a single element, got " +
                     shape_str(nodes_[r].value.shape()));
  for (auto& n : nodes_) n.grad = Tensor(n.value.shape(), 0.0);
  nodes_[r].grad[0] = 1.0;
  for (std::size_t i = r + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.backward) n.backward(*this, i);
  }
  backward_done_ = true;
}

const Tensor& Graph::grad(Var v) const {
  if (!backward_done_) throw Error("graph", "grad requested before backward");
  return nodes_.at(v.id()).grad;
}

// ----- operations -------------------------------------------------------

Var matmul(Var a, Var b) {
  require_same_graph("matmul", a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require_matrix("matmul", A);
  require_matrix("matmul", B);
  if (A.dim(1) != B.dim(0)) shape_fail("matmul", A.shape(), B.shape());
  const std::size_t n = A.dim(0), k = A.dim(1), m = B.dim(1);
  Tensor out({n, m}, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      if (av == 0.0) continue;
      const double* brow = &B[p * m];
      double* orow = &out[i * m];
      for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
    }
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph().record(std::move(out), {ia, ib}, [ia, ib, n, k, m](Graph& g, std::size_t self) {
    const Tensor& G = g.grad_of(self);
    const Tensor& A = g.value_of(ia);
    const Tensor& B = g.value_of(ib);
    if (g.tracks(ia)) {
      Tensor& dA = g.grad_buffer(ia);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < m; ++j) s += G[i * m + j] * B[p * m + j];
          dA[i * k + p] += s;
        }
    }
    if (g.tracks(ib)) {
      Tensor& dB = g.grad_buffer(ib);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double av = A[i * k + p];
          if (av == 0.0) continue;
          for (std::size_t j = 0; j < m; ++j) dB[p * m + j] += av * G[i * m + j];
        }
    }
  });
}

namespace {

enum class Binary { kAdd, kSub, kMul };

Var binary(const char* op, Binary kind, Var a, Var b) {
  require_same_graph(op, a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  const bool bcast = kind != Binary::kMul && row_broadcast(A.shape(), B.shape());
  if (!bcast && A.shape() != B.shape()) shape_fail(op, A.shape(), B.shape());
  Tensor out = A;
  const std::size_t cols = bcast ? B.size() : out.size();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double bv = B[i % cols];
    switch (kind) {
      case Binary::kAdd: out[i] += bv; break;
      case Binary::kSub: out[i] -= bv; break;
      case Binary::kMul: out[i] *= bv; break;
    }
  }
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph().record(std::move(out), {ia, ib}, [=](Graph& g, std::size_t self) {
    const Tensor& G = g.grad_of(self);
    if (g.tracks(ia)) {
      Tensor& dA = g.grad_buffer(ia);
      if (kind == Binary::kMul) {
        const Tensor& B = g.value_of(ib);
        for (std::size_t i = 0; i < G.size(); ++i) dA[i] += G[i] * B[i];
      } else {
        for (std::size_t i = 0; i < G.size(); ++i) dA[i] += G[i];
      }
    }
    if (g.tracks(ib)) {
      Tensor& dB = g.grad_buffer(ib);
      const double sign = kind == Binary::kSub ? -1.0 : 1.0;
      if (kind == Binary::kMul) {
        const Tensor& A = g.value_of(ia);
        for (std::size_t i = 0; i < G.size(); ++i) dB[i] += G[i] * A[i];
      } else {
        for (std::size_t i = 0; i < G.size(); ++i) dB[i % cols] += sign * G[i];
      }
    }
  });
}

template <class Fwd, class Deriv>
Var unary(Var a, Fwd fwd, Deriv deriv) {
  Tensor out = a.value();
  for (double& v : out.values()) v = fwd(v);
  const std::size_t ia = a.id();
  return a.graph().record(std::move(out), {ia}, [=](Graph& g, std::size_t self) {
    const Tensor& G = g.grad_of(self);
    const Tensor& X = g.value_of(ia);
    const Tensor& Y = g.value_of(self);
    Tensor& dX = g.grad_buffer(ia);
    for (std::size_t i = 0; i < G.size(); ++i) dX[i] += G[i] * deriv(X[i], Y[i]);
  });
}

}  // namespace

Var add(Var a, Var b) { return binary("add", Binary::kAdd, a, b); }
Var sub(Var a, Var b) { return binary("sub", Binary::kSub, a, b); }
Var mul(Var a, Var b) { return binary("mul", Binary::kMul, a, b); }

Var scale(Var a, double factor) {
  return unary(
      a, [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

Var affine(Var x, Var weight, Var bias) {
  const Tensor& W = weight.value();
  const Tensor& b = bias.value();
  require_matrix("affine", W);
  if (b.rank() != 1 || b.dim(0) != W.dim(1)) shape_fail("affine", W.shape(), b.shape());
  return add(matmul(x, weight), bias);
}

// Subgradient at 0 is 0.
Var relu(Var a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var tanh(Var a) {
  return unary(
      a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  const std::size_t ia = a.id();
  return a.graph().record(Tensor::scalar(s), {ia}, [ia](Graph& g, std::size_t self) {
    const double G = g.grad_of(self)[0];
    for (double& v : g.grad_buffer(ia).values()) v += G;
  });
}

Var mean(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var logsumexp(Var a) {
  const Tensor& X = a.value();
  require_matrix("logsumexp", X);
  const std::size_t rows = X.dim(0), cols = X.dim(1);
  if (cols == 0) throw ShapeError("logsumexp: zero columns");
  Tensor out({rows}, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cols; ++c) mx = std::max(mx, X.at(r, c));
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += std::exp(X.at(r, c) - mx);
    out[r] = mx + std::log(s);
  }
  const std::size_t ia = a.id();
  return a.graph().record(std::move(out), {ia}, [=](Graph& g, std::size_t self) {
    const Tensor& G = g.grad_of(self);
    const Tensor& X = g.value_of(ia);
    const Tensor& Y = g.value_of(self);
    Tensor& dX = g.grad_buffer(ia);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c)
        dX.at(r, c) += G[r] * std::exp(X.at(r, c) - Y[r]);
  });
}

Var row_mean(Var a) {
  const Tensor& X = a.value();
  require_matrix("row_mean", X);
  const std::size_t rows = X.dim(0), cols = X.dim(1);
  if (cols == 0) throw ShapeError("row_mean: zero columns");
  Tensor out({rows}, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += X.at(r, c);
    out[r] = s / static_cast<double>(cols);
  }
  const std::size_t ia = a.id();
  return a.graph().record(std::move(out), {ia}, [=](Graph& g, std::size_t self) {
    const Tensor& G = g.grad_of(self);
    Tensor& dX = g.grad_buffer(ia);
    const double inv = 1.0 / static_cast<double>(cols);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) dX.at(r, c) += G[r] * inv;
  });
}

namespace {

void check_labels(const char* op, const Tensor& X, const std::vector<int>& labels) {
  require_matrix(op, X);
  if (labels.size() != X.dim(0))
    throw ShapeError(std::string(op) + ": " + std::to_string(labels.size()) +
                     " labels for logits " + shape_str(X.shape()));
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= X.dim(1))
      throw ShapeError(std::string(op) + ": label " + std::to_string(y) + " out of range for " +
                       shape_str(X.shape()));
}

}  // namespace

Var select(Var a, std::vector<int> labels) {
  const Tensor& X = a.value();
  check_labels("select", X, labels);
  const std::size_t rows = X.dim(0);
  Tensor out({rows}, 0.0);
  for (std::size_t r = 0; r < rows; ++r) out[r] = X.at(r, static_cast<std::size_t>(labels[r]));
  const std::size_t ia = a.id();
  return a.graph().record(std::move(out), {ia},
                          [ia, labels = std::move(labels)](Graph& g, std::size_t self) {
                            const Tensor& G = g.grad_of(self);
                            Tensor& dX = g.grad_buffer(ia);
                            for (std::size_t r = 0; r < labels.size(); ++r)
                              dX.at(r, static_cast<std::size_t>(labels[r])) += G[r];
                          });
}

Var softmax_ce(Var logits, std::vector<int> labels) {
  const Tensor& X = logits.value();
  check_labels("softmax_ce", X, labels);
  const std::size_t rows = X.dim(0), cols = X.dim(1);
  Tensor out({rows}, 0.0);
  Tensor probs({rows, cols}, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cols; ++c) mx = std::max(mx, X.at(r, c));
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += std::exp(X.at(r, c) - mx);
    const double lse = mx + std::log(s);
    for (std::size_t c = 0; c < cols; ++c) probs.at(r, c) = std::exp(X.at(r, c) - lse);
    out[r] = lse - X.at(r, static_cast<std::size_t>(labels[r]));
  }
  const std::size_t ia = logits.id();
  return logits.graph().record(
      std::move(out), {ia},
      [ia, cols, labels = std::move(labels), probs = std::move(probs)](Graph& g, std::size_t self) {
        const Tensor& G = g.grad_of(self);
        Tensor& dX = g.grad_buffer(ia);
        for (std::size_t r = 0; r < labels.size(); ++r)
          for (std::size_t c = 0; c < cols; ++c) {
            const double onehot = static_cast<int>(c) == labels[r] ? 1.0 : 0.0;
            dX.at(r, c) += G[r] * (probs.at(r, c) - onehot);
          }
      });
}

// ----- gradient checking ------------------------------------------------

ValueAndGrad value_and_grad(const ScalarFn& fn, const Tensor& point) {
  Graph g;
  Var x = g.parameter(point);
  Var y = fn(g, x);
  g.backward(y);
  return {y.value()[0], g.grad(x)};
}

double grad_check(const ScalarFn& fn, const Tensor& point, double step) {
  if (!(step >= 1e-7 && step <= 1e-3))
    throw ConfigError("grad_check: step must lie in [1e-7, 1e-3]");
  auto eval = [&fn](const Tensor& p) {
    Graph g;
    Var y = fn(g, g.constant(p));
    if (y.value().size() != 1) throw ShapeError("grad_check: function must be scalar-valued");
    const double v = y.value()[0];
    if (!std::isfinite(v)) throw NumericError("grad_check: non-finite function value");
    return v;
  };
  const ValueAndGrad analytic = value_and_grad(fn, point);
  if (!std::isfinite(analytic.value) || !analytic.grad.all_finite())
    throw NumericError("grad_check: non-finite analytic value or gradient");
  double worst = 0.0;
  Tensor probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + step;
    const double up = eval(probe);
    probe[i] = orig - step;
    const double down = eval(probe);
    probe[i] = orig;
    const double numeric = (up - down) / (2.0 * step);
    const double a = analytic.grad[i];
    worst = std::max(worst, std::abs(a - numeric) / (std::abs(a) + 1e-12));
  }
  return worst;
}

}  // namespace beat::ad
