#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

#include "doctest.h"
#include "crossnet/errors.hpp"
#include "crossnet/matdiv.hpp"
#include "oracles.hpp"

using namespace crossnet;
using namespace crossnet::matdiv;

namespace {

double centered_of(std::vector<double> u, std::vector<double> v, double sigma) {
  return centered_correntropy(u, v, sigma);
}

Matrix permute_rows(const Matrix& m, const std::vector<Index>& perm) {
  Matrix out(m.rows(), m.cols());
  for (Index i = 0; i < m.rows(); ++i) out.row(i) = m.row(perm[static_cast<std::size_t>(i)]);
  return out;
}

Vector permute(const Vector& v, const std::vector<Index>& perm) {
  Vector out(v.size());
  for (Index i = 0; i < v.size(); ++i) out[i] = v[perm[static_cast<std::size_t>(i)]];
  return out;
}

// <G, E> against central differences of f along the symmetric direction E.
double directional_fd(const std::function<double(const Matrix&)>& f, const Matrix& x,
                      const Matrix& e, double h) {
  return (f(x + h * e) - f(x - h * e)) / (2.0 * h);
}

}  // namespace

TEST_CASE("rbf kernel closed forms") {
  CHECK(rbf_kernel(0.0, 0.0, 1.0) == 1.0);
  CHECK(rbf_kernel(1.0, 0.0, 1.0) == doctest::Approx(0.606531).epsilon(1e-6));
  CHECK(rbf_kernel(3.0, 0.0, 1.0) == doctest::Approx(0.011109).epsilon(1e-4));
  CHECK(rbf_kernel(0.3, -1.2, 0.7) == rbf_kernel(-1.2, 0.3, 0.7));
  CHECK_THROWS_AS(rbf_kernel(0.0, 1.0, 0.0), InvalidArgument);
  CHECK_THROWS_AS(rbf_kernel(NAN, 1.0, 1.0), InvalidArgument);
  CHECK_THROWS_AS(rbf_kernel(0.0, INFINITY, 1.0), InvalidArgument);
}

TEST_CASE("centered correntropy scalar estimator") {
  CHECK(std::abs(centered_of({2.0, 2.0, 2.0}, {2.0, 2.0, 2.0}, 1.0)) <= 1e-15);
  const double expected = (2.0 - 2.0 * std::exp(-0.5)) / 4.0;
  CHECK(centered_of({0.0, 1.0}, {0.0, 1.0}, 1.0) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(expected == doctest::Approx(0.196734).epsilon(1e-5));
  CHECK(centered_of({0.0, 1.0}, {1.0, 0.0}, 1.0) == doctest::Approx(-expected).epsilon(1e-12));

  std::mt19937_64 rng(3);
  const Matrix z = oracle::random_matrix(rng, 17, 2);
  std::vector<double> u(z.col(0).data(), z.col(0).data() + 17);
  std::vector<double> v(z.col(1).data(), z.col(1).data() + 17);
  CHECK(centered_of(u, v, 0.8) == doctest::Approx(oracle::centered(z.col(0), z.col(1), 0.8)).epsilon(1e-12));
  CHECK(centered_of(u, v, 0.8) == doctest::Approx(centered_of(v, u, 0.8)).epsilon(1e-14));

  CHECK_THROWS_AS(centered_of({1.0}, {1.0}, 1.0), InsufficientSample);
  CHECK_THROWS_AS(centered_of({1.0, 2.0}, {1.0, 2.0, 3.0}, 1.0), InvalidArgument);
}

TEST_CASE("correntropy matrix") {
  DivergenceConfig cfg;
  cfg.jitter = 1e-3;
  const Matrix same = Matrix::Constant(6, 3, 0.7);
  const SPDMatrix c = correntropy_matrix(same, cfg);
  CHECK((c.entries() - 1e-3 * Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() <= 1e-15);

  cfg.jitter = 0.0;
  Matrix z(2, 1);
  z << 0.0, 1.0;
  CHECK(correntropy_matrix(z, cfg).entries()(0, 0) == doctest::Approx(0.196734).epsilon(1e-5));

  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix r = oracle::random_matrix(rng, 12, 4);
    const Matrix raw = self_correntropy(r, 1.0);
    CHECK((raw.array() == raw.transpose().array()).all());
    CHECK(raw.diagonal().minCoeff() >= -1e-12);
    CHECK((raw - oracle::corr_matrix(r, 1.0, 0.0)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("SPD matrix validation") {
  Matrix asym(2, 2);
  asym << 1.0, 0.1, 0.2, 1.0;
  CHECK_THROWS_AS(SPDMatrix{asym}, InvalidArgument);
  Matrix indefinite(2, 2);
  indefinite << 1.0, 2.0, 2.0, 1.0;
  try {
    SPDMatrix m(indefinite, 37);
    FAIL("expected DegenerateMatrix");
  } catch (const DegenerateMatrix& e) {
    CHECK(e.batch_rows() == 37);
  }
  CHECK_THROWS_AS(SPDMatrix{Matrix(0, 0)}, InvalidArgument);
  const SPDMatrix two(2.0 * Matrix::Identity(3, 3));
  CHECK(two.log_det() == doctest::Approx(3.0 * std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("Bregman divergences: closed forms") {
  const SPDMatrix i2(Matrix::Identity(2, 2));
  const SPDMatrix two_i2(2.0 * Matrix::Identity(2, 2));
  CHECK(bregman_logdet(two_i2, i2) == doctest::Approx(2.0 - 2.0 * std::log(2.0)).epsilon(1e-12));
  CHECK(std::abs(bregman_logdet(two_i2, i2) - 0.613706) < 5e-7);
  CHECK(std::abs(bregman_logdet(i2, two_i2) - 0.386294) < 5e-7);
  CHECK(std::abs(bregman_vonneumann(two_i2, i2) - 0.772589) < 5e-7);
  Matrix a(2, 2), b(2, 2);
  a << 1.0, 0.0, 0.0, 2.0;
  b << 2.0, 0.0, 0.0, 1.0;
  CHECK(std::abs(bregman_vonneumann(SPDMatrix(a), SPDMatrix(b)) - 0.693147) < 5e-7);
  CHECK(bregman(two_i2, i2, Flavor::LogDet) == bregman_logdet(two_i2, i2));
  CHECK(bregman(two_i2, i2, Flavor::VonNeumann) == bregman_vonneumann(two_i2, i2));
  CHECK_THROWS_AS(bregman_logdet(i2, SPDMatrix(Matrix::Identity(3, 3))), InvalidArgument);
}

TEST_CASE("Bregman divergences: random SPD pairs against the oracle") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> dim_dist(1, 10);
  for (int trial = 0; trial < 100; ++trial) {
    const int dim = dim_dist(rng);
    const Matrix a = oracle::random_spd(rng, dim);
    const Matrix b = oracle::random_spd(rng, dim);
    const SPDMatrix sa(a), sb(b);
    const double ld = bregman_logdet(sa, sb);
    const double vn = bregman_vonneumann(sa, sb);
    CHECK(ld >= -1e-10);
    CHECK(vn >= -1e-8);
    CHECK(ld == doctest::Approx(oracle::logdet_div(a, b)).epsilon(1e-7));
    CHECK(vn == doctest::Approx(oracle::vn_div(a, b)).epsilon(1e-7));
    CHECK(std::abs(bregman_logdet(sa, sa)) <= 1e-10);
    CHECK(std::abs(bregman_vonneumann(sa, sa)) <= 1e-8);
  }
}

TEST_CASE("Bregman gradients match directional finite differences") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const int dim = 2 + trial % 4;
    const Matrix a = oracle::random_spd(rng, dim);
    const Matrix b = oracle::random_spd(rng, dim);
    const Matrix g = oracle::random_matrix(rng, dim, dim);
    const Matrix e = 0.5 * (g + g.transpose());
    for (bool logdet : {true, false}) {
      const BregmanGrad g = logdet ? bregman_logdet_grad(a, b) : bregman_vonneumann_grad(a, b);
      CHECK(g.value == doctest::Approx(oracle::div(a, b, logdet)).epsilon(1e-9));
      const double fa = directional_fd([&](const Matrix& x) { return oracle::div(x, b, logdet); },
                                       a, e, 1e-6);
      const double fb = directional_fd([&](const Matrix& x) { return oracle::div(a, x, logdet); },
                                       b, e, 1e-6);
      CHECK((g.d_a.array() * e.array()).sum() == doctest::Approx(fa).epsilon(1e-6));
      CHECK((g.d_b.array() * e.array()).sum() == doctest::Approx(fb).epsilon(1e-6));
    }
  }
}

TEST_CASE("conditional divergence") {
  std::mt19937_64 rng(23);
  const Matrix phi = oracle::random_matrix(rng, 64, 4);
  const Vector y = oracle::random_matrix(rng, 64, 1).col(0);
  DivergenceConfig cfg;

  SUBCASE("identical groups give zero") {
    CHECK(std::abs(cond_divergence(phi, y, phi, y, cfg)) <= 1e-10);
    cfg.flavor = Flavor::VonNeumann;
    CHECK(std::abs(cond_divergence(phi, y, phi, y, cfg)) <= 1e-10);
  }

  SUBCASE("strictly increasing in an outcome shift") {
    for (Flavor f : {Flavor::LogDet, Flavor::VonNeumann}) {
      cfg.flavor = f;
      double prev = cond_divergence(phi, y, phi, y, cfg);
      for (double shift : {0.5, 1.0, 2.0}) {
        const Vector moved = (y.array() + shift).matrix();
        const double d = cond_divergence(phi, y, phi, moved, cfg);
        CHECK(d > prev);
        prev = d;
      }
    }
  }

  SUBCASE("matches the independent oracle") {
    const Matrix phi_to = oracle::random_matrix(rng, 40, 4);
    const Vector y_to = oracle::random_matrix(rng, 40, 1).col(0);
    for (bool logdet : {true, false}) {
      cfg.flavor = logdet ? Flavor::LogDet : Flavor::VonNeumann;
      const double d = cond_divergence(phi, y, phi_to, y_to, cfg);
      CHECK(d == doctest::Approx(oracle::cond_div(phi, y, phi_to, y_to, 1.0, cfg.jitter, logdet))
                     .epsilon(1e-7));
      cfg.symmetrize = true;
      const double both =
          0.5 * (oracle::cond_div(phi, y, phi_to, y_to, 1.0, cfg.jitter, logdet) +
                 oracle::cond_div(phi_to, y_to, phi, y, 1.0, cfg.jitter, logdet));
      CHECK(cond_divergence(phi, y, phi_to, y_to, cfg) == doctest::Approx(both).epsilon(1e-7));
      cfg.symmetrize = false;
    }
  }

  SUBCASE("row permutations are bit-exact") {
    const Matrix phi_to = oracle::random_matrix(rng, 30, 4);
    const Vector y_to = oracle::random_matrix(rng, 30, 1).col(0);
    std::vector<Index> p0(64), p1(30);
    std::iota(p0.begin(), p0.end(), 0);
    std::iota(p1.begin(), p1.end(), 0);
    std::shuffle(p0.begin(), p0.end(), rng);
    std::shuffle(p1.begin(), p1.end(), rng);
    const double base = cond_divergence(phi, y, phi_to, y_to, cfg);
    const double perm = cond_divergence(permute_rows(phi, p0), permute(y, p0),
                                        permute_rows(phi_to, p1), permute(y_to, p1), cfg);
    CHECK(base == perm);
  }

  SUBCASE("scale coupling of inputs and kernel width") {
    const Matrix phi_to = oracle::random_matrix(rng, 30, 4);
    const Vector y_to = oracle::random_matrix(rng, 30, 1).col(0);
    cfg.jitter = 0.0;
    cfg.flavor = Flavor::VonNeumann;
    const double base = cond_divergence(phi, y, phi_to, y_to, cfg);
    DivergenceConfig scaled = cfg;
    scaled.sigma = 4.0;
    const double s = cond_divergence(4.0 * phi, 4.0 * y, 4.0 * phi_to, 4.0 * y_to, scaled);
    CHECK(s == doctest::Approx(base).epsilon(1e-9));
  }

  SUBCASE("errors") {
    CHECK_THROWS_AS(cond_divergence(phi.topRows(1), y.head(1), phi, y, cfg), InsufficientSample);
    CHECK_THROWS_AS(cond_divergence(phi, y, phi.leftCols(3), y, cfg), InvalidArgument);
    CHECK_THROWS_AS(cond_divergence(phi, y.head(10), phi, y, cfg), InvalidArgument);
  }
}

TEST_CASE("correntropy partial derivatives match finite differences") {
  std::mt19937_64 rng(29);
  const Matrix u = oracle::random_matrix(rng, 7, 3);
  const Matrix v = oracle::random_matrix(rng, 7, 2);
  CorrentropyPartials g;
  const Matrix c = cross_correntropy(u, v, 0.9, &g);
  CHECK((c - oracle::corr_matrix((Matrix(7, 5) << u, v).finished(), 0.9, 0.0)
                 .topRightCorner(3, 2))
            .cwiseAbs()
            .maxCoeff() < 1e-12);
  const double h = 1e-6;
  for (Index a = 0; a < 3; ++a) {
    for (Index b = 0; b < 2; ++b) {
      for (Index i = 0; i < 7; ++i) {
        Matrix up = u, um = u;
        up(i, a) += h;
        um(i, a) -= h;
        const double fd_u = (oracle::centered(up.col(a), v.col(b), 0.9) -
                             oracle::centered(um.col(a), v.col(b), 0.9)) / (2 * h);
        CHECK(g.du(i, a + 3 * b) == doctest::Approx(fd_u).epsilon(1e-6));
        Matrix vp = v, vm = v;
        vp(i, b) += h;
        vm(i, b) -= h;
        const double fd_v = (oracle::centered(u.col(a), vp.col(b), 0.9) -
                             oracle::centered(u.col(a), vm.col(b), 0.9)) / (2 * h);
        CHECK(g.dv(i, a + 3 * b) == doctest::Approx(fd_v).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("median heuristic") {
  Matrix z(3, 1);
  z << 0.0, 1.0, 3.0;
  CHECK(median_heuristic_sigma(z) == doctest::Approx(2.0));
}
