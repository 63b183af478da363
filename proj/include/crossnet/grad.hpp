#pragma once

// Tape-based reverse-mode differentiation over the closed set of matrix
// primitives used by the training losses.
//
// Usage:
//   grad::Tape tape;
//   auto w = tape.leaf(W);                 // differentiable input
//   auto x = tape.constant(X);             // data
//   auto loss = grad::mse_mean(grad::affine(x, w, b), y);
//   tape.backward(loss);
//   const Matrix& dw = tape.grad(w);
//
// Nodes are evaluated eagerly when recorded. backward() walks them in reverse
// recording order, so gradients are deterministic for fixed inputs.

#include <cstddef>
#include <deque>
#include <functional>
#include <string_view>

#include "crossnet/types.hpp"

namespace crossnet::grad {

enum class Op {
  Leaf,
  // core primitives
  Affine,
  Elu,
  Relu,
  Sigmoid,
  MseMean,
  BceMean,
  GaussianKernel,
  Sum,
  Mean,
  MatMul,
  Inverse,
  LogDet,
  Trace,
  // structural and elementwise helpers
  Add,
  Sub,
  Scale,
  Transpose,
  HConcat,
  VConcat,
  TopLeft,
  AddDiagonal,
  ColMean,
  SquaredNorm,
  // fused kernel statistics and divergences
  SelfCorrentropy,
  CrossCorrentropy,
  BregmanLogDet,
  BregmanVonNeumann,
};

std::string_view op_name(Op op);

class Tape;

// Lightweight handle to a node on a tape. Valid as long as the tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  // Scalar value of a 1x1 node.
  double item() const;
  bool requires_grad() const;
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Matrix& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Matrix value, bool requires_grad = true);
  Var constant(Matrix value) { return leaf(std::move(value), false); }

  // Seeds d(root)/d(root) = 1 and propagates to every node. `root` must be 1x1.
  void backward(Var root);

  // Gradient accumulated at `v`; a zero matrix of the node's shape when no
  // gradient reached it.
  Matrix grad(Var v) const;

  std::size_t size() const { return nodes_.size(); }
  Op op(Var v) const;

  // Used by the primitive constructors.
  Var record(Op op, Matrix value, std::initializer_list<Var> parents, BackwardFn fn);
  void accumulate(Var v, const Matrix& g);

 private:
  friend class Var;
  struct Node {
    Op op = Op::Leaf;
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    BackwardFn backward;
  };
  const Node& node(Var v) const;
  std::deque<Node> nodes_;
};

// x: n x in, w: in x out, b: 1 x out  ->  x w + 1 b
Var affine(Var x, Var w, Var b);
Var elu(Var x);
Var relu(Var x);
Var sigmoid(Var x);
// Means over all entries.
Var mse_mean(Var pred, Var target);
Var bce_mean(Var prob, Var target);
// Elementwise exp(-(a-b)^2 / (2 sigma^2)).
Var gaussian_kernel(Var a, Var b, double sigma);
Var sum(Var x);
Var mean(Var x);
Var matmul(Var a, Var b);
Var inverse(Var a);
// log det of a symmetric positive-definite matrix via Cholesky.
Var logdet(Var a);
Var trace(Var a);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var a, double c);
Var transpose(Var a);
Var hconcat(Var a, Var b);
Var vconcat(Var a, Var b);
Var top_left(Var a, Index rows, Index cols);
Var add_diagonal(Var a, double c);
// 1 x cols row of column means.
Var col_mean(Var x);
// Sum of squared entries.
Var squared_norm(Var x);

// Centered correntropy matrices (see matdiv::self_correntropy /
// matdiv::cross_correntropy). Derivative sums are only collected when an
// input requires a gradient.
Var self_correntropy(Var z, double sigma);
Var cross_correntropy(Var u, Var v, double sigma);

// Bregman divergences with closed-form gradients. `batch_rows` is reported
// in DegenerateMatrix errors.
Var bregman_logdet(Var a, Var b, std::size_t batch_rows = 0);
Var bregman_vonneumann(Var a, Var b, std::size_t batch_rows = 0);

}  // namespace crossnet::grad
