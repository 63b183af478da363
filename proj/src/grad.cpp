#include "crossnet/grad.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "crossnet/errors.hpp"
#include "crossnet/matdiv.hpp"

namespace crossnet::grad {

std::string_view op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Affine: return "affine";
    case Op::Elu: return "elu";
    case Op::Relu: return "relu";
    case Op::Sigmoid: return "sigmoid";
    case Op::MseMean: return "mse_mean";
    case Op::BceMean: return "bce_mean";
    case Op::GaussianKernel: return "gaussian_kernel";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
    case Op::MatMul: return "matmul";
    case Op::Inverse: return "inverse";
    case Op::LogDet: return "logdet";
    case Op::Trace: return "trace";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Scale: return "scale";
    case Op::Transpose: return "transpose";
    case Op::HConcat: return "hconcat";
    case Op::VConcat: return "vconcat";
    case Op::TopLeft: return "top_left";
    case Op::AddDiagonal: return "add_diagonal";
    case Op::ColMean: return "col_mean";
    case Op::SquaredNorm: return "squared_norm";
    case Op::SelfCorrentropy: return "self_correntropy";
    case Op::CrossCorrentropy: return "cross_correntropy";
    case Op::BregmanLogDet: return "bregman_logdet";
    case Op::BregmanVonNeumann: return "bregman_vonneumann";
  }
  return "unknown";
}

const Matrix& Var::value() const { return tape_->node(*this).value; }

double Var::item() const {
  const Matrix& v = value();
  if (v.size() != 1) throw InvalidArgument("item() on a non-scalar node");
  return v(0, 0);
}

bool Var::requires_grad() const { return tape_->node(*this).requires_grad; }

const Tape::Node& Tape::node(Var v) const {
  if (v.tape_ != this || v.id_ >= nodes_.size()) {
    throw InvalidArgument("variable does not belong to this tape");
  }
  return nodes_[v.id_];
}

Var Tape::leaf(Matrix value, bool requires_grad) {
  nodes_.push_back(Node{Op::Leaf, std::move(value), Matrix(), requires_grad, nullptr});
  return Var(this, nodes_.size() - 1);
}

Op Tape::op(Var v) const { return node(v).op; }

Var Tape::record(Op op, Matrix value, std::initializer_list<Var> parents, BackwardFn fn) {
  bool needs = false;
  for (const Var& p : parents) {
    needs = needs || node(p).requires_grad;
  }
  nodes_.push_back(Node{op, std::move(value), Matrix(), needs, needs ? std::move(fn) : nullptr});
  return Var(this, nodes_.size() - 1);
}

void Tape::accumulate(Var v, const Matrix& g) {
  Node& n = nodes_[v.id_];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

void Tape::backward(Var root) {
  const Node& r = node(root);
  if (r.value.size() != 1) throw InvalidArgument("backward() needs a scalar root");
  for (auto& n : nodes_) n.grad.resize(0, 0);
  nodes_[root.id_].grad = Matrix::Ones(1, 1);
  for (std::size_t k = root.id_ + 1; k-- > 0;) {
    Node& n = nodes_[k];
    if (n.backward && n.grad.size() != 0) {
      const Matrix g = n.grad;
      n.backward(*this, g);
    }
  }
}

Matrix Tape::grad(Var v) const {
  const Node& n = node(v);
  if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

namespace {

void require_same_tape(Var a, Var b) {
  if (a.tape() == nullptr || a.tape() != b.tape()) {
    throw InvalidArgument("operands live on different tapes");
  }
}

void require_same_shape(Var a, Var b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw InvalidArgument(std::string(what) + ": shape mismatch");
  }
}

void require_square(Var a, const char* what) {
  if (a.rows() != a.cols() || a.rows() == 0) {
    throw InvalidArgument(std::string(what) + ": needs a nonempty square matrix");
  }
}

Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }

}  // namespace

Var affine(Var x, Var w, Var b) {
  require_same_tape(x, w);
  require_same_tape(x, b);
  if (x.cols() != w.rows() || b.rows() != 1 || b.cols() != w.cols()) {
    throw InvalidArgument("affine: incompatible shapes");
  }
  Matrix out = x.value() * w.value();
  out.rowwise() += b.value().row(0);
  return x.tape()->record(Op::Affine, std::move(out), {x, w, b},
                          [x, w, b](Tape& t, const Matrix& g) {
                            if (x.requires_grad()) t.accumulate(x, g * w.value().transpose());
                            if (w.requires_grad()) t.accumulate(w, x.value().transpose() * g);
                            if (b.requires_grad()) t.accumulate(b, g.colwise().sum());
                          });
}

Var elu(Var x) {
  const Matrix& xv = x.value();
  Matrix out = (xv.array() > 0.0).select(xv.array(), xv.array().exp() - 1.0).matrix();
  return x.tape()->record(Op::Elu, std::move(out), {x}, [x](Tape& t, const Matrix& g) {
    const Matrix& v = x.value();
    const Matrix d = (v.array() > 0.0).select(Eigen::ArrayXXd::Ones(v.rows(), v.cols()), v.array().exp()).matrix();
    t.accumulate(x, g.cwiseProduct(d));
  });
}

Var relu(Var x) {
  const Matrix& xv = x.value();
  Matrix out = xv.cwiseMax(0.0);
  return x.tape()->record(Op::Relu, std::move(out), {x}, [x](Tape& t, const Matrix& g) {
    const Matrix& v = x.value();
    t.accumulate(x, (v.array() > 0.0).select(g.array(), 0.0).matrix());
  });
}

Var sigmoid(Var x) {
  Matrix out = (1.0 / (1.0 + (-x.value().array()).exp())).matrix();
  auto out_id = std::make_shared<Matrix>(out);
  return x.tape()->record(Op::Sigmoid, std::move(out), {x}, [x, out_id](Tape& t, const Matrix& g) {
    const auto s = out_id->array();
    t.accumulate(x, (g.array() * s * (1.0 - s)).matrix());
  });
}

Var mse_mean(Var pred, Var target) {
  require_same_tape(pred, target);
  require_same_shape(pred, target, "mse_mean");
  const double count = static_cast<double>(pred.value().size());
  if (count == 0) throw InvalidArgument("mse_mean of an empty batch");
  const Matrix diff = pred.value() - target.value();
  const double v = diff.squaredNorm() / count;
  return pred.tape()->record(Op::MseMean, scalar(v), {pred, target},
                             [pred, target, diff, count](Tape& t, const Matrix& g) {
                               const Matrix d = (2.0 * g(0, 0) / count) * diff;
                               t.accumulate(pred, d);
                               t.accumulate(target, -d);
                             });
}

namespace {
constexpr double kProbFloor = 1e-12;
}

Var bce_mean(Var prob, Var target) {
  require_same_tape(prob, target);
  require_same_shape(prob, target, "bce_mean");
  const double count = static_cast<double>(prob.value().size());
  if (count == 0) throw InvalidArgument("bce_mean of an empty batch");
  const auto p = prob.value().array().max(kProbFloor).min(1.0 - kProbFloor);
  const auto y = target.value().array();
  const double v = -(y * p.log() + (1.0 - y) * (1.0 - p).log()).sum() / count;
  const Matrix pc = p.matrix();
  return prob.tape()->record(
      Op::BceMean, scalar(v), {prob, target}, [prob, target, pc, count](Tape& t, const Matrix& g) {
        const auto pa = pc.array();
        const auto ya = target.value().array();
        const double s = g(0, 0) / count;
        t.accumulate(prob, (s * (pa - ya) / (pa * (1.0 - pa))).matrix());
        t.accumulate(target, (s * ((1.0 - pa).log() - pa.log())).matrix());
      });
}

Var gaussian_kernel(Var a, Var b, double sigma) {
  require_same_tape(a, b);
  require_same_shape(a, b, "gaussian_kernel");
  if (!(sigma > 0.0)) throw InvalidArgument("gaussian_kernel: sigma must be positive");
  const Matrix diff = a.value() - b.value();
  Matrix k = (-diff.array().square() / (2.0 * sigma * sigma)).exp().matrix();
  const Matrix dk = (-diff.array() * k.array() / (sigma * sigma)).matrix();
  return a.tape()->record(Op::GaussianKernel, std::move(k), {a, b},
                          [a, b, dk](Tape& t, const Matrix& g) {
                            const Matrix ga = g.cwiseProduct(dk);
                            t.accumulate(a, ga);
                            t.accumulate(b, -ga);
                          });
}

Var sum(Var x) {
  const Index r = x.rows(), c = x.cols();
  return x.tape()->record(Op::Sum, scalar(x.value().sum()), {x},
                          [x, r, c](Tape& t, const Matrix& g) {
                            t.accumulate(x, Matrix::Constant(r, c, g(0, 0)));
                          });
}

Var mean(Var x) {
  const Index r = x.rows(), c = x.cols();
  if (x.value().size() == 0) throw InvalidArgument("mean of an empty matrix");
  const double count = static_cast<double>(r * c);
  return x.tape()->record(Op::Mean, scalar(x.value().sum() / count), {x},
                          [x, r, c, count](Tape& t, const Matrix& g) {
                            t.accumulate(x, Matrix::Constant(r, c, g(0, 0) / count));
                          });
}

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  if (a.cols() != b.rows()) throw InvalidArgument("matmul: inner dimensions differ");
  return a.tape()->record(Op::MatMul, a.value() * b.value(), {a, b},
                          [a, b](Tape& t, const Matrix& g) {
                            if (a.requires_grad()) t.accumulate(a, g * b.value().transpose());
                            if (b.requires_grad()) t.accumulate(b, a.value().transpose() * g);
                          });
}

Var inverse(Var a) {
  require_square(a, "inverse");
  Eigen::FullPivLU<Matrix> lu(a.value());
  if (!lu.isInvertible()) throw DegenerateMatrix("inverse: singular matrix", 0);
  Matrix inv = lu.inverse();
  const Matrix inv_t = inv.transpose();
  return a.tape()->record(Op::Inverse, std::move(inv), {a}, [a, inv_t](Tape& t, const Matrix& g) {
    t.accumulate(a, -inv_t * g * inv_t);
  });
}

Var logdet(Var a) {
  require_square(a, "logdet");
  Eigen::LLT<Matrix> llt(a.value());
  if (llt.info() != Eigen::Success) {
    throw DegenerateMatrix("logdet: matrix is not positive definite", 0);
  }
  const double v = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  if (!std::isfinite(v)) throw DegenerateMatrix("logdet: matrix is not positive definite", 0);
  const Matrix inv = llt.solve(Matrix::Identity(a.rows(), a.cols()));
  const Matrix sym_inv = 0.5 * (inv + inv.transpose());
  return a.tape()->record(Op::LogDet, scalar(v), {a}, [a, sym_inv](Tape& t, const Matrix& g) {
    t.accumulate(a, g(0, 0) * sym_inv);
  });
}

Var trace(Var a) {
  require_square(a, "trace");
  const Index n = a.rows();
  return a.tape()->record(Op::Trace, scalar(a.value().trace()), {a},
                          [a, n](Tape& t, const Matrix& g) {
                            t.accumulate(a, g(0, 0) * Matrix::Identity(n, n));
                          });
}

Var add(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a, b, "add");
  return a.tape()->record(Op::Add, a.value() + b.value(), {a, b},
                          [a, b](Tape& t, const Matrix& g) {
                            t.accumulate(a, g);
                            t.accumulate(b, g);
                          });
}

Var sub(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a, b, "sub");
  return a.tape()->record(Op::Sub, a.value() - b.value(), {a, b},
                          [a, b](Tape& t, const Matrix& g) {
                            t.accumulate(a, g);
                            t.accumulate(b, -g);
                          });
}

Var scale(Var a, double c) {
  return a.tape()->record(Op::Scale, c * a.value(), {a},
                          [a, c](Tape& t, const Matrix& g) { t.accumulate(a, c * g); });
}

Var transpose(Var a) {
  return a.tape()->record(Op::Transpose, a.value().transpose(), {a},
                          [a](Tape& t, const Matrix& g) { t.accumulate(a, g.transpose()); });
}

Var hconcat(Var a, Var b) {
  require_same_tape(a, b);
  if (a.rows() != b.rows()) throw InvalidArgument("hconcat: row counts differ");
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a.value(), b.value();
  const Index ca = a.cols(), cb = b.cols();
  return a.tape()->record(Op::HConcat, std::move(out), {a, b},
                          [a, b, ca, cb](Tape& t, const Matrix& g) {
                            t.accumulate(a, g.leftCols(ca));
                            t.accumulate(b, g.rightCols(cb));
                          });
}

Var vconcat(Var a, Var b) {
  require_same_tape(a, b);
  if (a.cols() != b.cols()) throw InvalidArgument("vconcat: column counts differ");
  Matrix out(a.rows() + b.rows(), a.cols());
  out << a.value(), b.value();
  const Index ra = a.rows(), rb = b.rows();
  return a.tape()->record(Op::VConcat, std::move(out), {a, b},
                          [a, b, ra, rb](Tape& t, const Matrix& g) {
                            t.accumulate(a, g.topRows(ra));
                            t.accumulate(b, g.bottomRows(rb));
                          });
}

Var top_left(Var a, Index rows, Index cols) {
  if (rows > a.rows() || cols > a.cols() || rows < 0 || cols < 0) {
    throw InvalidArgument("top_left: block exceeds matrix");
  }
  const Index r = a.rows(), c = a.cols();
  return a.tape()->record(Op::TopLeft, a.value().topLeftCorner(rows, cols), {a},
                          [a, r, c, rows, cols](Tape& t, const Matrix& g) {
                            Matrix full = Matrix::Zero(r, c);
                            full.topLeftCorner(rows, cols) = g;
                            t.accumulate(a, full);
                          });
}

Var add_diagonal(Var a, double c) {
  require_square(a, "add_diagonal");
  Matrix out = a.value();
  out.diagonal().array() += c;
  return a.tape()->record(Op::AddDiagonal, std::move(out), {a},
                          [a](Tape& t, const Matrix& g) { t.accumulate(a, g); });
}

Var col_mean(Var x) {
  const Index n = x.rows();
  if (n == 0) throw InvalidArgument("col_mean of an empty matrix");
  return x.tape()->record(Op::ColMean, x.value().colwise().mean(), {x},
                          [x, n](Tape& t, const Matrix& g) {
                            t.accumulate(x, g.replicate(n, 1) / static_cast<double>(n));
                          });
}

Var squared_norm(Var x) {
  return x.tape()->record(Op::SquaredNorm, scalar(x.value().squaredNorm()), {x},
                          [x](Tape& t, const Matrix& g) {
                            t.accumulate(x, 2.0 * g(0, 0) * x.value());
                          });
}

Var self_correntropy(Var z, double sigma) {
  std::shared_ptr<matdiv::CorrentropyPartials> partials;
  if (z.requires_grad()) partials = std::make_shared<matdiv::CorrentropyPartials>();
  Matrix c = matdiv::self_correntropy(z.value(), sigma, partials.get());
  const Index p = z.cols();
  return z.tape()->record(
      Op::SelfCorrentropy, std::move(c), {z}, [z, partials, p](Tape& t, const Matrix& g) {
        Matrix dz = Matrix::Zero(z.rows(), p);
        for (Index b = 0; b < p; ++b) {
          for (Index a = 0; a <= b; ++a) {
            const double w = a == b ? g(a, a) : g(a, b) + g(b, a);
            if (w == 0.0) continue;
            const Index col = a + p * b;
            dz.col(a) += w * partials->du.col(col);
            dz.col(b) += w * partials->dv.col(col);
          }
        }
        t.accumulate(z, dz);
      });
}

Var cross_correntropy(Var u, Var v, double sigma) {
  require_same_tape(u, v);
  std::shared_ptr<matdiv::CorrentropyPartials> partials;
  if (u.requires_grad() || v.requires_grad()) {
    partials = std::make_shared<matdiv::CorrentropyPartials>();
  }
  Matrix c = matdiv::cross_correntropy(u.value(), v.value(), sigma, partials.get());
  const Index p = u.cols(), q = v.cols();
  return u.tape()->record(
      Op::CrossCorrentropy, std::move(c), {u, v},
      [u, v, partials, p, q](Tape& t, const Matrix& g) {
        Matrix du = Matrix::Zero(u.rows(), p);
        Matrix dv = Matrix::Zero(v.rows(), q);
        for (Index b = 0; b < q; ++b) {
          for (Index a = 0; a < p; ++a) {
            const double w = g(a, b);
            if (w == 0.0) continue;
            const Index col = a + p * b;
            du.col(a) += w * partials->du.col(col);
            dv.col(b) += w * partials->dv.col(col);
          }
        }
        t.accumulate(u, du);
        t.accumulate(v, dv);
      });
}

namespace {

Var bregman_node(Op op, Var a, Var b, matdiv::BregmanGrad res) {
  const double value = res.value;
  auto shared = std::make_shared<matdiv::BregmanGrad>(std::move(res));
  return a.tape()->record(op, scalar(value), {a, b}, [a, b, shared](Tape& t, const Matrix& g) {
    t.accumulate(a, g(0, 0) * shared->d_a);
    t.accumulate(b, g(0, 0) * shared->d_b);
  });
}

}  // namespace

Var bregman_logdet(Var a, Var b, std::size_t batch_rows) {
  require_same_tape(a, b);
  return bregman_node(Op::BregmanLogDet, a, b,
                      matdiv::bregman_logdet_grad(a.value(), b.value(), batch_rows));
}

Var bregman_vonneumann(Var a, Var b, std::size_t batch_rows) {
  require_same_tape(a, b);
  return bregman_node(Op::BregmanVonNeumann, a, b,
                      matdiv::bregman_vonneumann_grad(a.value(), b.value(), batch_rows));
}

}  // namespace crossnet::grad
