#include "crossnet/matdiv.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "crossnet/errors.hpp"

namespace crossnet::matdiv {

namespace {

void require_sigma(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw InvalidArgument("kernel width sigma must be positive and finite, got " +
                          std::to_string(sigma));
  }
}

Eigen::LLT<Matrix> factor_or_throw(const Matrix& m, std::size_t batch_rows,
                                   const char* what) {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) {
    throw DegenerateMatrix(std::string(what) + " is not positive definite", batch_rows);
  }
  // LLT only inspects the lower triangle; a non-positive pivot can slip through
  // as NaN on badly scaled input.
  const auto diag = llt.matrixLLT().diagonal();
  if (!diag.allFinite() || (diag.array() <= 0.0).any()) {
    throw DegenerateMatrix(std::string(what) + " is not positive definite", batch_rows);
  }
  return llt;
}

void require_same_dim(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols() || a.rows() != a.cols()) {
    throw InvalidArgument("divergence arguments must be square matrices of equal dimension");
  }
}

Matrix permute_rows(const Matrix& m, const std::vector<Index>& order) {
  Matrix out(m.rows(), m.cols());
  for (Index k = 0; k < m.rows(); ++k) out.row(k) = m.row(order[k]);
  return out;
}

Matrix unpermute_rows(const Matrix& m, const std::vector<Index>& order) {
  Matrix out(m.rows(), m.cols());
  for (Index k = 0; k < m.rows(); ++k) out.row(order[k]) = m.row(k);
  return out;
}

// Shared estimator. In the symmetric case v == u and only b >= a is visited.
Matrix correntropy_impl(const Matrix& u_in, const Matrix& v_in, bool symmetric,
                        double sigma, CorrentropyPartials* grad) {
  require_sigma(sigma);
  const Index n = u_in.rows();
  if (v_in.rows() != n) {
    throw InvalidArgument("correntropy inputs must have the same number of rows");
  }
  if (n < 2) {
    throw InsufficientSample("centered correntropy needs at least 2 samples, got " +
                             std::to_string(n));
  }
  if (!u_in.allFinite() || !v_in.allFinite()) {
    throw InvalidArgument("correntropy inputs must be finite");
  }
  const Index p = u_in.cols();
  const Index q = v_in.cols();

  const auto order = canonical_row_order(u_in, symmetric ? nullptr : &v_in);
  const Matrix u = permute_rows(u_in, order);
  const Matrix v = symmetric ? u : permute_rows(v_in, order);

  const double inv_s2 = 1.0 / (sigma * sigma);
  const double c = 0.5 * inv_s2;
  const double inv_n = 1.0 / static_cast<double>(n);
  const double inv_n2 = inv_n * inv_n;

  Matrix out(p, q);
  if (grad != nullptr) {
    grad->du = Matrix::Zero(n, p * q);
    grad->dv = Matrix::Zero(n, p * q);
  }

  // d(i, j) = u(i, a) - v(j, b); all n x n kernel values of one entry at once.
  Eigen::ArrayXXd d(n, n), e(n, n), de(n, n);
  for (Index a = 0; a < p; ++a) {
    for (Index b = symmetric ? a : 0; b < q; ++b) {
      for (Index j = 0; j < n; ++j) d.col(j) = u.col(a).array() - v(j, b);
      e = (-c * d.square()).exp();
      out(a, b) = e.matrix().diagonal().sum() * inv_n - e.sum() * inv_n2;
      if (symmetric) out(b, a) = out(a, b);
      if (grad != nullptr) {
        const Index col = a + p * b;
        de = d * e;
        const Eigen::ArrayXd diag = de.matrix().diagonal().array();
        grad->du.col(col) =
            (inv_s2 * (inv_n2 * de.rowwise().sum() - inv_n * diag)).matrix();
        grad->dv.col(col) =
            (inv_s2 * (inv_n * diag - inv_n2 * de.colwise().sum().transpose())).matrix();
      }
    }
  }
  if (grad != nullptr) {
    grad->du = unpermute_rows(grad->du, order);
    grad->dv = unpermute_rows(grad->dv, order);
  }
  return out;
}

// log(x)-log(y) / (x-y), stable for x close to y.
double log_divided_difference(double x, double y) {
  if (x == y) return 1.0 / x;
  const double r = (x - y) / y;
  return std::log1p(r) / (x - y);
}

struct SymEig {
  Vector values;
  Matrix vectors;
};

SymEig positive_eig(const Matrix& m, std::size_t batch_rows, const char* what) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  if (es.info() != Eigen::Success) {
    throw DegenerateMatrix(std::string(what) + ": eigendecomposition failed", batch_rows);
  }
  if (!(es.eigenvalues().array() > 0.0).all()) {
    throw DegenerateMatrix(std::string(what) + " has a non-positive eigenvalue", batch_rows);
  }
  return {es.eigenvalues(), es.eigenvectors()};
}

Matrix sym_log(const SymEig& eig) {
  return eig.vectors * eig.values.array().log().matrix().asDiagonal() *
         eig.vectors.transpose();
}

}  // namespace

void DivergenceConfig::validate() const {
  require_sigma(sigma);
  if (!(jitter >= 0.0) || !std::isfinite(jitter)) {
    throw InvalidArgument("jitter must be nonnegative and finite");
  }
}

SPDMatrix::SPDMatrix(Matrix entries, std::size_t batch_rows) : entries_(std::move(entries)) {
  if (entries_.rows() < 1 || entries_.rows() != entries_.cols()) {
    throw InvalidArgument("SPD matrix must be square with dim >= 1");
  }
  if (!(entries_.array() == entries_.transpose().array()).all()) {
    throw InvalidArgument("SPD matrix must be exactly symmetric");
  }
  llt_ = factor_or_throw(entries_, batch_rows, "matrix");
}

double SPDMatrix::log_det() const {
  return 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
}

double rbf_kernel(double a, double b, double sigma) {
  require_sigma(sigma);
  if (!std::isfinite(a) || !std::isfinite(b)) {
    throw InvalidArgument("rbf_kernel arguments must be finite");
  }
  const double d = a - b;
  return std::exp(-d * d / (2.0 * sigma * sigma));
}

double centered_correntropy(std::span<const double> u, std::span<const double> v,
                            double sigma) {
  if (u.size() != v.size()) {
    throw InvalidArgument("centered_correntropy: length mismatch");
  }
  const auto n = static_cast<Index>(u.size());
  const Matrix um = Eigen::Map<const Vector>(u.data(), n);
  const Matrix vm = Eigen::Map<const Vector>(v.data(), n);
  return cross_correntropy(um, vm, sigma)(0, 0);
}

std::vector<Index> canonical_row_order(const Matrix& u, const Matrix* v) {
  std::vector<Index> order(static_cast<std::size_t>(u.rows()));
  std::iota(order.begin(), order.end(), Index{0});
  auto less = [&](Index x, Index y) {
    for (Index c = 0; c < u.cols(); ++c) {
      if (u(x, c) != u(y, c)) return u(x, c) < u(y, c);
    }
    if (v != nullptr) {
      for (Index c = 0; c < v->cols(); ++c) {
        if ((*v)(x, c) != (*v)(y, c)) return (*v)(x, c) < (*v)(y, c);
      }
    }
    return false;
  };
  std::stable_sort(order.begin(), order.end(), less);
  return order;
}

Matrix cross_correntropy(const Matrix& u, const Matrix& v, double sigma,
                         CorrentropyPartials* grad) {
  return correntropy_impl(u, v, false, sigma, grad);
}

Matrix self_correntropy(const Matrix& u, double sigma, CorrentropyPartials* grad) {
  return correntropy_impl(u, u, true, sigma, grad);
}

SPDMatrix correntropy_matrix(const Matrix& z, const DivergenceConfig& cfg) {
  cfg.validate();
  if (z.cols() < 1) throw InvalidArgument("correntropy_matrix needs d >= 1");
  Matrix c = self_correntropy(z, cfg.sigma);
  c.diagonal().array() += cfg.jitter;
  return SPDMatrix(std::move(c), static_cast<std::size_t>(z.rows()));
}

double bregman_logdet(const SPDMatrix& a, const SPDMatrix& b) {
  require_same_dim(a.entries(), b.entries());
  // With A = La La^T and B = Lb Lb^T, M = Lb^-1 La is lower triangular and
  //   D = sum_ij M_ij^2 - 2 sum_i log M_ii - dim,
  // a sum of nonnegative terms (x^2 - 2 log x - 1 >= 0).
  const Matrix la = a.cholesky().matrixL();
  const Matrix m = b.cholesky().matrixL().solve(la);
  double value = 0.0;
  for (Index j = 0; j < m.cols(); ++j) {
    for (Index i = 0; i < m.rows(); ++i) {
      if (i == j) {
        const double x = m(i, i);
        value += x * x - 2.0 * std::log(x) - 1.0;
      } else if (i > j) {
        value += m(i, j) * m(i, j);
      }
    }
  }
  return value;
}

double bregman_vonneumann(const SPDMatrix& a, const SPDMatrix& b) {
  require_same_dim(a.entries(), b.entries());
  return bregman_vonneumann_grad(a.entries(), b.entries()).value;
}

double bregman(const SPDMatrix& a, const SPDMatrix& b, Flavor flavor) {
  return flavor == Flavor::LogDet ? bregman_logdet(a, b) : bregman_vonneumann(a, b);
}

BregmanGrad bregman_logdet_grad(const Matrix& a, const Matrix& b, std::size_t batch_rows) {
  require_same_dim(a, b);
  const auto llt_a = factor_or_throw(a, batch_rows, "correntropy matrix");
  const auto llt_b = factor_or_throw(b, batch_rows, "correntropy matrix");
  const Index n = a.rows();
  const Matrix la = llt_a.matrixL();
  const Matrix m = llt_b.matrixL().solve(la);

  BregmanGrad out;
  for (Index j = 0; j < n; ++j) {
    for (Index i = j; i < n; ++i) {
      if (i == j) {
        const double x = m(i, i);
        out.value += x * x - 2.0 * std::log(x) - 1.0;
      } else {
        out.value += m(i, j) * m(i, j);
      }
    }
  }
  const Matrix identity = Matrix::Identity(n, n);
  const Matrix a_inv = llt_a.solve(identity);
  const Matrix b_inv = llt_b.solve(identity);
  out.d_a = b_inv - a_inv;
  out.d_b = b_inv - b_inv * a * b_inv;
  return out;
}

BregmanGrad bregman_vonneumann_grad(const Matrix& a, const Matrix& b,
                                    std::size_t batch_rows) {
  require_same_dim(a, b);
  const SymEig ea = positive_eig(a, batch_rows, "correntropy matrix");
  const SymEig eb = positive_eig(b, batch_rows, "correntropy matrix");
  const Index n = a.rows();

  const Matrix log_a = sym_log(ea);
  const Matrix log_b = sym_log(eb);

  BregmanGrad out;
  // tr(A log A) - tr(A log B) - tr(A) + tr(B)
  const double a_log_a = (ea.values.array() * ea.values.array().log()).sum();
  const double a_log_b = (a.array() * log_b.array()).sum();
  out.value = a_log_a - a_log_b - a.trace() + b.trace();

  out.d_a = log_a - log_b;

  Matrix gamma(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      gamma(i, j) = log_divided_difference(eb.values[i], eb.values[j]);
    }
  }
  const Matrix a_rot = eb.vectors.transpose() * a * eb.vectors;
  out.d_b = Matrix::Identity(n, n) -
            eb.vectors * gamma.cwiseProduct(a_rot) * eb.vectors.transpose();
  return out;
}

double cond_divergence(const Matrix& phi_from, const Vector& y_from, const Matrix& phi_to,
                       const Vector& y_to, const DivergenceConfig& cfg) {
  cfg.validate();
  if (phi_from.cols() != phi_to.cols()) {
    throw InvalidArgument("cond_divergence: representation widths differ");
  }
  if (phi_from.rows() != y_from.size() || phi_to.rows() != y_to.size()) {
    throw InvalidArgument("cond_divergence: outcome length does not match row count");
  }
  if (phi_from.rows() < 2 || phi_to.rows() < 2) {
    throw InsufficientSample("cond_divergence needs at least 2 rows per group");
  }
  const Index r = phi_from.cols();
  auto joint = [](const Matrix& phi, const Vector& y) {
    Matrix z(phi.rows(), phi.cols() + 1);
    z << phi, y;
    return z;
  };
  const SPDMatrix cxy_from = correntropy_matrix(joint(phi_from, y_from), cfg);
  const SPDMatrix cxy_to = correntropy_matrix(joint(phi_to, y_to), cfg);

  const auto directed = [&](const SPDMatrix& from_xy, const SPDMatrix& to_xy) {
    const double dxy = bregman(from_xy, to_xy, cfg.flavor);
    if (r == 0) return dxy;
    const SPDMatrix from_x(from_xy.entries().topLeftCorner(r, r));
    const SPDMatrix to_x(to_xy.entries().topLeftCorner(r, r));
    return dxy - bregman(from_x, to_x, cfg.flavor);
  };

  const double forward = directed(cxy_from, cxy_to);
  if (!cfg.symmetrize) return forward;
  return 0.5 * (forward + directed(cxy_to, cxy_from));
}

double median_heuristic_sigma(const Matrix& z) {
  std::vector<double> diffs;
  const Index n = z.rows();
  diffs.reserve(static_cast<std::size_t>(n * (n - 1) / 2 * z.cols()));
  for (Index c = 0; c < z.cols(); ++c) {
    for (Index i = 0; i < n; ++i) {
      for (Index j = i + 1; j < n; ++j) diffs.push_back(std::abs(z(i, c) - z(j, c)));
    }
  }
  if (diffs.empty()) throw InsufficientSample("median heuristic needs at least 2 rows");
  const auto mid = diffs.begin() + static_cast<std::ptrdiff_t>(diffs.size() / 2);
  std::nth_element(diffs.begin(), mid, diffs.end());
  const double med = *mid;
  if (!(med > 0.0)) throw InvalidArgument("median heuristic produced a zero kernel width");
  return med;
}

}  // namespace crossnet::matdiv
