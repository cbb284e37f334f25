#include <doctest.h>

#include <Eigen/Dense>
#include <random>

#include "covtune/errors.hpp"
#include "covtune/linalg.hpp"
#include "test_helpers.hpp"

using namespace covtune;
namespace tst = covtune::testing;

TEST_SUITE("linalg") {

TEST_CASE("pseudoinverse of the identity is the identity") {
  const PsdMatrix a(Eigen::MatrixXd::Identity(2, 2));
  CHECK((a.pseudo_inverse().entries() - Eigen::MatrixXd::Identity(2, 2)).norm() < 1e-14);
}

TEST_CASE("pseudoinverse of a rank-deficient diagonal inverts nonzero entries only") {
  Eigen::VectorXd d(2);
  d << 2.0, 0.0;
  const PsdMatrix a = PsdMatrix::FromDiagonal(d);
  const Eigen::MatrixXd p = a.pseudo_inverse().entries();
  CHECK(p(0, 0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(p(1, 1) == doctest::Approx(0.0));
  CHECK(p(0, 1) == doctest::Approx(0.0));
}

TEST_CASE("pseudoinverse of a random rank-2 matrix satisfies the Penrose conditions") {
  std::mt19937 rng(11);
  const Eigen::MatrixXd a = tst::random_psd(rng, 4, 2);
  const PsdMatrix pa(a);
  CHECK(pa.rank() == 2);
  CHECK(tst::penrose_residual(a, pa.pseudo_inverse().entries()) < 1e-10);
}

TEST_CASE("penrose conditions hold across random PSD matrices of every rank") {
  std::mt19937 rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Index m = 1 + trial % 7;
    const Eigen::Index rank = trial % (m + 1);
    const Eigen::MatrixXd a = tst::random_psd(rng, m, rank);
    const PsdMatrix pa(a);
    CHECK(tst::penrose_residual(a, pa.pseudo_inverse().entries()) < 1e-9);
  }
}

TEST_CASE("zero matrix pseudoinverts to zero") {
  const PsdMatrix a = PsdMatrix::Zero(3);
  CHECK(a.pseudo_inverse().entries().norm() == 0.0);
  CHECK(a.rank() == 0);
}

TEST_CASE("scaling property (alpha A)^+ = alpha^-1 A^+") {
  std::mt19937 rng(23);
  const Eigen::MatrixXd a = tst::random_psd(rng, 5, 3);
  for (double alpha : {1e-3, 0.5, 7.0, 1e3}) {
    const Eigen::MatrixXd lhs = PsdMatrix(Eigen::MatrixXd(alpha * a)).pseudo_inverse().entries();
    const Eigen::MatrixXd rhs = PsdMatrix(a).pseudo_inverse().entries() / alpha;
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-10 * rhs.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("construction rejects bad inputs") {
  Eigen::MatrixXd nonsym(2, 2);
  nonsym << 1.0, 0.5, -0.5, 1.0;
  CHECK_THROWS_AS(PsdMatrix{nonsym}, InvalidInputError);

  Eigen::MatrixXd indef(2, 2);
  indef << 1.0, 0.0, 0.0, -1.0;
  CHECK_THROWS_AS(PsdMatrix{indef}, InvalidInputError);

  Eigen::MatrixXd nan(1, 1);
  nan << std::nan("");
  CHECK_THROWS_AS(PsdMatrix{nan}, InvalidInputError);

  CHECK_THROWS_AS(PsdMatrix{Eigen::MatrixXd::Zero(2, 3)}, InvalidInputError);
}

TEST_CASE("tiny negative eigenvalues are clamped, not rejected") {
  Eigen::MatrixXd a(2, 2);
  a << 1.0, 0.0, 0.0, -1e-14;
  const PsdMatrix pa(a);
  CHECK(pa.rank() == 1);
  CHECK(pa.eigenvalues().minCoeff() == 0.0);
}

TEST_CASE("in_range on a singular diagonal") {
  Eigen::VectorXd d(2);
  d << 1.0, 0.0;
  const PsdMatrix a = PsdMatrix::FromDiagonal(d);
  CHECK(in_range(Eigen::Vector2d(1.0, 0.0), a));
  CHECK_FALSE(in_range(Eigen::Vector2d(0.0, 1.0), a));
  CHECK(in_range(Eigen::Vector2d(0.0, 0.0), a));
}

TEST_CASE("A u is always in range(A); null components are detected") {
  std::mt19937 rng(31);
  for (int trial = 0; trial < 30; ++trial) {
    const Eigen::Index m = 2 + trial % 6;
    const Eigen::Index rank = 1 + trial % m;
    const Eigen::MatrixXd a = tst::random_psd(rng, m, rank);
    const PsdMatrix pa(a);
    const Eigen::VectorXd u = tst::random_vector(rng, m);
    CHECK(in_range(Eigen::VectorXd(a * u), pa));
    if (rank < m) {
      // Component in the null space beyond tolerance.
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(a);
      const Eigen::VectorXd null_dir = eig.eigenvectors().col(0);
      CHECK_FALSE(in_range(Eigen::VectorXd(a * u + null_dir), pa));
    }
  }
}

TEST_CASE("weighted square norm basics") {
  CHECK(weighted_sq_norm(Eigen::Vector2d(3.0, 4.0), PsdMatrix::Identity(2)) ==
        doctest::Approx(25.0).epsilon(1e-14));
  CHECK(weighted_sq_norm(Eigen::Vector2d(1.0, 9.0), PsdMatrix::Zero(2)) == 0.0);

  Eigen::MatrixXd w(2, 2);
  w << 2.0, 1.0, 1.0, 2.0;
  // Scalar expansion: x^T W x = w00 x0^2 + 2 w01 x0 x1 + w11 x1^2.
  const double x0 = 1.0, x1 = -1.0;
  const double expected = 2.0 * x0 * x0 + 2.0 * 1.0 * x0 * x1 + 2.0 * x1 * x1;
  CHECK(expected == 2.0);
  CHECK(weighted_sq_norm(Eigen::Vector2d(x0, x1), PsdMatrix(w)) ==
        doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("zero weighted norm on the range implies a zero vector") {
  std::mt19937 rng(37);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::MatrixXd a = tst::random_psd(rng, 5, 3);
    const PsdMatrix pa(a);
    const Eigen::VectorXd x = a * tst::random_vector(rng, 5);
    if (weighted_sq_norm(x, pa) <= 1e-18 && in_range(x, pa)) {
      CHECK(x.norm() <= 1e-8);
    } else {
      CHECK(weighted_sq_norm(x, pa) > 0.0);
    }
  }
}

TEST_CASE("spectral factor reconstructs and has orthonormal columns") {
  std::mt19937 rng(41);
  const Eigen::MatrixXd a = tst::random_psd(rng, 6, 4);
  const PsdMatrix pa(a);
  const SpectralFactor f = pa.spectral_factor();
  CHECK(f.basis.cols() == 4);
  CHECK((f.basis.transpose() * f.basis - Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() <
        1e-12);
  const Eigen::MatrixXd recon = f.basis * f.eigenvalues.asDiagonal() * f.basis.transpose();
  CHECK((recon - pa.entries()).cwiseAbs().maxCoeff() <=
        kDefaultRankTol * std::max(1.0, f.eigenvalues.maxCoeff()) * 10.0);
  const Eigen::MatrixXd s = f.sqrt_factor();
  CHECK((s * s.transpose() - pa.entries()).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("rectangular pseudoinverse satisfies the Penrose conditions") {
  std::mt19937 rng(43);
  for (auto [r, c] : {std::pair{6, 3}, std::pair{3, 6}, std::pair{5, 5}}) {
    const Eigen::MatrixXd x = tst::random_matrix(rng, r, c);
    const Eigen::MatrixXd p = matrix_pseudo_inverse(x);
    CHECK(tst::penrose_residual(x, p) < 1e-9);
  }
  // Rank-deficient rectangular case.
  Eigen::MatrixXd x(4, 3);
  x.col(0) = tst::random_vector(rng, 4);
  x.col(1) = 2.0 * x.col(0);
  x.col(2) = tst::random_vector(rng, 4);
  CHECK(tst::penrose_residual(x, matrix_pseudo_inverse(x)) < 1e-8);
}

TEST_CASE("pinv application helpers agree with the dense pseudoinverse") {
  std::mt19937 rng(47);
  const Eigen::MatrixXd a = tst::random_psd(rng, 5, 3);
  const PsdMatrix pa(a);
  const Eigen::MatrixXd pinv = pa.pseudo_inverse().entries();
  const Eigen::VectorXd v = tst::random_vector(rng, 5);
  CHECK((pa.pinv_apply(v) - pinv * v).norm() < 1e-10);
  CHECK(pa.pinv_quadratic_form(v) == doctest::Approx(v.dot(pinv * v)).epsilon(1e-10));
  CHECK((pa.project_onto_range(v) - a * (pinv * v)).norm() < 1e-9);
}

}  // TEST_SUITE
