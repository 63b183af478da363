#pragma once

// Kernel statistics and Bregman matrix divergences.
//
// The conditional-distribution discrepancy between two groups is measured
// through centered correntropy matrices: for a group with representation
// rows Phi and outcomes y, C_xy is the correntropy matrix of [Phi, y] and
// C_x the one of Phi alone. The discrepancy from group "from" to group "to"
// is D(C_xy_from || C_xy_to) - D(C_x_from || C_x_to).

#include <cstddef>
#include <span>
#include <vector>

#include "crossnet/types.hpp"

namespace crossnet::matdiv {

enum class Flavor { LogDet, VonNeumann };

struct DivergenceConfig {
  double sigma = 1.0;    // Gaussian kernel width
  double jitter = 1e-6;  // added to the diagonal before factorization
  Flavor flavor = Flavor::LogDet;
  bool symmetrize = false;

  void validate() const;
};

// Symmetric positive-definite matrix. Construction checks exact symmetry and
// runs a Cholesky factorization; failure raises DegenerateMatrix carrying
// `batch_rows` (the number of samples the matrix was estimated from, 0 when
// not applicable).
class SPDMatrix {
 public:
  explicit SPDMatrix(Matrix entries, std::size_t batch_rows = 0);

  Index dim() const noexcept { return entries_.rows(); }
  const Matrix& entries() const noexcept { return entries_; }
  const Eigen::LLT<Matrix>& cholesky() const noexcept { return llt_; }
  double log_det() const;

 private:
  Matrix entries_;
  Eigen::LLT<Matrix> llt_;
};

double rbf_kernel(double a, double b, double sigma);

double centered_correntropy(std::span<const double> u, std::span<const double> v,
                            double sigma);

// d x d matrix of pairwise centered correntropies between the columns of Z,
// plus cfg.jitter on the diagonal.
SPDMatrix correntropy_matrix(const Matrix& z, const DivergenceConfig& cfg);

double bregman_logdet(const SPDMatrix& a, const SPDMatrix& b);
double bregman_vonneumann(const SPDMatrix& a, const SPDMatrix& b);
double bregman(const SPDMatrix& a, const SPDMatrix& b, Flavor flavor);

double cond_divergence(const Matrix& phi_from, const Vector& y_from,
                       const Matrix& phi_to, const Vector& y_to,
                       const DivergenceConfig& cfg);

// Median of |z_i - z_j| over all row pairs, pooled across columns.
double median_heuristic_sigma(const Matrix& z);

// Value of a divergence together with its gradients with respect to both
// (full, unsymmetrized) matrix arguments.
struct BregmanGrad {
  double value = 0.0;
  Matrix d_a;
  Matrix d_b;
};

// LogDet: dD/dA = B^-1 - A^-1, dD/dB = B^-1 - B^-1 A B^-1.
BregmanGrad bregman_logdet_grad(const Matrix& a, const Matrix& b,
                                std::size_t batch_rows = 0);
// Von Neumann: dD/dA = log A - log B, dD/dB = I - Dlog_B[A] (the adjoint of
// the Frechet derivative of the matrix logarithm at B, applied to A).
BregmanGrad bregman_vonneumann_grad(const Matrix& a, const Matrix& b,
                                    std::size_t batch_rows = 0);

// p x q matrix of centered correntropies between the columns of U (n x p) and
// V (n x q). When `grad` is non-null it also receives the per-row partial
// derivatives needed to backpropagate through the estimator:
//   du(i, a + p*b) = dC(a,b) / dU(i,a)
//   dv(j, a + p*b) = dC(a,b) / dV(j,b)
// Rows are processed in a canonical (lexicographic) order so the result is
// bit-identical under any permutation of the input rows.
struct CorrentropyPartials {
  Matrix du;
  Matrix dv;
};
Matrix cross_correntropy(const Matrix& u, const Matrix& v, double sigma,
                         CorrentropyPartials* grad = nullptr);

// Symmetric specialization cross_correntropy(U, U). Only the upper triangle is
// evaluated and mirrored, so the result is exactly symmetric. `grad` holds the
// partials for the evaluated a <= b entries.
Matrix self_correntropy(const Matrix& u, double sigma,
                        CorrentropyPartials* grad = nullptr);

// Row order (a permutation of 0..n-1) sorting the rows of [U | V]
// lexicographically.
std::vector<Index> canonical_row_order(const Matrix& u, const Matrix* v = nullptr);

}  // namespace crossnet::matdiv
