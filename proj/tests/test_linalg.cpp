#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "rcca/linalg.hpp"
#include "support.hpp"

using namespace rcca;
using rcca::testing::gaussian_matrix;
using rcca::testing::random_orthonormal;
using rcca::testing::random_pd;

TEST(CompactSvd, DiagonalMatrix) {
  Matrix a(2, 2);
  a << 2, 0, 0, 1;
  const CompactSvd s = compact_svd(a);
  EXPECT_NEAR(s.singular_values(0), 2.0, 1e-14);
  EXPECT_NEAR(s.singular_values(1), 1.0, 1e-14);
  EXPECT_TRUE(s.left.isApprox(Matrix::Identity(2, 2), 1e-14));
  EXPECT_TRUE(s.right.isApprox(Matrix::Identity(2, 2), 1e-14));
}

TEST(CompactSvd, PermutationMatrix) {
  Matrix a(2, 2);
  a << 0, 1, 1, 0;
  const CompactSvd s = compact_svd(a);
  ASSERT_EQ(s.rank(), 2);
  EXPECT_NEAR(s.singular_values(0), 1.0, 1e-14);
  EXPECT_NEAR(s.singular_values(1), 1.0, 1e-14);
  EXPECT_LE((s.reconstruct() - a).norm(), 1e-14);
}

TEST(CompactSvd, SquaredSingularValuesAreGramEigenvalues) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix a = gaussian_matrix(rng, 5, 3);
    const CompactSvd s = compact_svd(a);
    Eigen::SelfAdjointEigenSolver<Matrix> oracle(a.transpose() * a);
    Vector ev = oracle.eigenvalues().reverse();
    ASSERT_EQ(s.rank(), 3);
    for (Index k = 0; k < 3; ++k) EXPECT_NEAR(s.singular_values(k) * s.singular_values(k), ev(k), 1e-10);
  }
}

TEST(CompactSvd, DropsSmallSingularValues) {
  Rng rng(3);
  const Matrix a = gaussian_matrix(rng, 6, 2) * gaussian_matrix(rng, 2, 5);
  const CompactSvd s = compact_svd(a);
  EXPECT_EQ(s.rank(), 2);
  EXPECT_LE((s.reconstruct() - a).norm(), 1e-10 * a.norm());
}

TEST(CompactSvd, RejectsNonFinite) {
  Matrix a = Matrix::Identity(2, 2);
  a(0, 1) = std::nan("");
  EXPECT_THROW(compact_svd(a), InvalidInput);
}

TEST(CompactSvd, SignRuleLargestEntryPositive) {
  Rng rng(5);
  const Matrix a = gaussian_matrix(rng, 7, 4);
  const CompactSvd s = compact_svd(a);
  for (Index k = 0; k < s.rank(); ++k) {
    Index arg;
    s.left.col(k).cwiseAbs().maxCoeff(&arg);
    EXPECT_GT(s.left(arg, k), 0.0);
  }
}

TEST(CompactSvdProperty, OrderOrthonormalityReconstruction) {
  Rng rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const Index p = 1 + static_cast<Index>(rng.below(8));
    const Index q = 1 + static_cast<Index>(rng.below(8));
    const Matrix a = gaussian_matrix(rng, p, q);
    const CompactSvd s = compact_svd(a);
    for (Index k = 1; k < s.rank(); ++k) EXPECT_GE(s.singular_values(k - 1), s.singular_values(k));
    EXPECT_GE(s.singular_values.minCoeff(), 0.0);
    EXPECT_LE(orthonormality_deviation(s.left), 1e-10);
    EXPECT_LE(orthonormality_deviation(s.right), 1e-10);
    EXPECT_LE((s.reconstruct() - a).norm(), 1e-10 * a.norm());
  }
}

TEST(SymmetricEigen, ReconstructsAndSorts) {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix a = random_pd(rng, 6) - 0.5 * Matrix::Identity(6, 6);
    const SpectralDecomposition e = symmetric_eigen(a);
    for (Index k = 1; k < 6; ++k) EXPECT_GE(e.eigenvalues(k - 1), e.eigenvalues(k));
    EXPECT_LE((e.reconstruct() - a).norm(), 1e-10 * a.norm());
  }
}

TEST(SymMatrixPower, Identity) {
  const Matrix i3 = Matrix::Identity(3, 3);
  EXPECT_TRUE(sym_matrix_power(i3, MatrixPower::InverseSqrt).isApprox(i3, 1e-14));
}

TEST(SymMatrixPower, Diagonal) {
  Matrix a = Matrix::Zero(2, 2);
  a(0, 0) = 4;
  a(1, 1) = 9;
  const Matrix r = sym_matrix_power(a, MatrixPower::InverseSqrt);
  EXPECT_NEAR(r(0, 0), 0.5, 1e-14);
  EXPECT_NEAR(r(1, 1), 1.0 / 3.0, 1e-14);
  EXPECT_NEAR(r(0, 1), 0.0, 1e-14);
}

TEST(SymMatrixPower, SpectralOracle) {
  // result^2 * A == A^(2 e + 1) computed from an independent eigensolve.
  Rng rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix a = random_pd(rng, 6);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(a);
    for (MatrixPower pw : {MatrixPower::Inverse, MatrixPower::InverseSqrt, MatrixPower::Sqrt}) {
      const double e = power_exponent(pw);
      const Matrix r = sym_matrix_power(a, pw);
      const Vector powered = eig.eigenvalues().array().pow(2 * e + 1);
      const Matrix expected = eig.eigenvectors() * powered.asDiagonal() * eig.eigenvectors().transpose();
      EXPECT_LE((r * r * a - expected).norm(), 1e-9 * std::max(1.0, expected.norm()));
      EXPECT_LE(detail::asymmetry(r), 1e-12 * std::max(1.0, r.norm()));
    }
  }
}

TEST(SymMatrixPower, RejectsAsymmetric) {
  Matrix a = Matrix::Identity(3, 3);
  a(0, 1) = 1e-3;
  EXPECT_THROW(sym_matrix_power(a, MatrixPower::Sqrt), InvalidInput);
}

TEST(SymMatrixPower, FloorsSmallEigenvalues) {
  Matrix a = Matrix::Zero(2, 2);
  a(0, 0) = 1.0;
  const Matrix r = sym_matrix_power(a, MatrixPower::InverseSqrt, 1e-4);
  EXPECT_NEAR(r(1, 1), 100.0, 1e-9);
}

TEST(CanonicalAngles, IdenticalSubspaces) {
  Rng rng(1);
  const Matrix z = random_orthonormal(rng, 6, 3);
  const PrincipalAngles a = canonical_angles(z, z);
  for (Index k = 0; k < 3; ++k) EXPECT_NEAR(a.cosines(k), 1.0, 1e-12);
}

TEST(CanonicalAngles, OrthogonalSubspaces) {
  const Matrix i3 = Matrix::Identity(3, 3);
  const PrincipalAngles a = canonical_angles(i3.col(0), i3.col(1));
  EXPECT_NEAR(a.cosines(0), 0.0, 1e-15);
  EXPECT_NEAR(a.sin2_theta(), 1.0, 1e-15);
}

TEST(CanonicalAngles, RotatedPlane) {
  const double t = 0.3;
  Matrix z = Matrix::Zero(3, 2), w = Matrix::Zero(3, 2);
  z(0, 0) = 1;
  z(1, 1) = 1;
  w(0, 0) = 1;
  w(1, 1) = std::cos(t);
  w(2, 1) = std::sin(t);
  const PrincipalAngles a = canonical_angles(z, w);
  EXPECT_NEAR(a.cosines(0), 1.0, 1e-14);
  EXPECT_NEAR(a.cosines(1), std::cos(t), 1e-14);
}

TEST(CanonicalAngles, RejectsNonOrthonormal) {
  Matrix z = Matrix::Identity(3, 2);
  z(0, 0) = 1.1;
  try {
    canonical_angles(z, z);
    FAIL() << "expected an exception";
  } catch (const InvalidInput& e) {
    EXPECT_NE(std::string(e.what()).find("0.21"), std::string::npos);
  }
}

TEST(CanonicalAnglesProperty, SymmetryProjectionAndComplement) {
  Rng rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    const Index n = 4 + static_cast<Index>(rng.below(6));
    const Index k = 1 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(n - 1)));
    const Matrix z = random_orthonormal(rng, n, k);
    const Matrix w = random_orthonormal(rng, n, k);
    const PrincipalAngles zw = canonical_angles(z, w);
    const PrincipalAngles wz = canonical_angles(w, z);
    for (Index i = 0; i < k; ++i) EXPECT_NEAR(zw.cosines(i), wz.cosines(i), 1e-12);
    for (Index i = 0; i < k; ++i) {
      EXPECT_GE(zw.cosines(i), 0.0);
      EXPECT_LE(zw.cosines(i), 1.0);
    }
    const Matrix pz = z * z.transpose();
    const Matrix pw = w * w.transpose();
    const double proj = (pz * (Matrix::Identity(n, n) - pw)).squaredNorm();
    EXPECT_NEAR(zw.sin2_theta(), proj, 1e-9);
    EXPECT_NEAR(zw.sin2_theta() + zw.cos2_theta(), static_cast<double>(k), 1e-10);
  }
}

TEST(GramSchmidt, AlreadyOrthonormal) {
  const Matrix m = Matrix::Identity(4, 2);
  EXPECT_TRUE(gram_schmidt_metric(m, Matrix::Identity(4, 4)).isApprox(m, 1e-15));
}

TEST(GramSchmidt, TwoStep) {
  Matrix m = Matrix::Zero(2, 2);
  m << 1, 1, 0, 1;
  const Matrix out = gram_schmidt_metric(m, Matrix::Identity(2, 2));
  EXPECT_TRUE(out.isApprox(Matrix::Identity(2, 2), 1e-15));
}

TEST(GramSchmidt, RandomMetric) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix m = gaussian_matrix(rng, 6, 3);
    const Matrix g = random_pd(rng, 6);
    const Matrix out = gram_schmidt_metric(m, g);
    EXPECT_LE((out.transpose() * g * out - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-10);
    // Nested spans: column k lies in span of the first k+1 inputs.
    for (Index k = 0; k < 3; ++k) {
      const Matrix basis = m.leftCols(k + 1);
      const Vector coef = basis.colPivHouseholderQr().solve(Vector(out.col(k)));
      EXPECT_LE((basis * coef - out.col(k)).norm(), 1e-10);
    }
  }
}

TEST(GramSchmidt, ReportsDependentColumn) {
  Matrix m(3, 3);
  m << 1, 0, 1, 0, 1, 1, 0, 0, 0;
  try {
    gram_schmidt_metric(m, Matrix::Identity(3, 3));
    FAIL() << "expected an exception";
  } catch (const InvalidInput& e) {
    EXPECT_NE(std::string(e.what()).find("column 2"), std::string::npos);
  }
  EXPECT_EQ(orthonormal_basis(m).cols(), 2);
}

TEST(Sin2Theta, BasisInvariant) {
  Rng rng(12);
  const Matrix a = gaussian_matrix(rng, 8, 3);
  const Matrix b = gaussian_matrix(rng, 8, 3);
  const Matrix mix = gaussian_matrix(rng, 3, 3);
  EXPECT_NEAR(sin2_theta_between(a, b), sin2_theta_between(a * mix, b), 1e-10);
  EXPECT_NEAR(sin2_theta_between(a, a * mix), 0.0, 1e-10);
}
