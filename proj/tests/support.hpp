#pragma once

// Random instance generators shared by the test binaries.

#include <cstdint>

#include "rcca/cca_core.hpp"
#include "rcca/datamodel.hpp"
#include "rcca/linalg.hpp"
#include "rcca/random.hpp"

namespace rcca::testing {

inline Matrix gaussian_matrix(Rng& rng, Index rows, Index cols) {
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = rng.normal();
  return m;
}

/// Wishart-like PD matrix with eigenvalues bounded away from zero.
inline Matrix random_pd(Rng& rng, Index d, double ridge = 0.1) {
  const Matrix a = gaussian_matrix(rng, d, 2 * d);
  Matrix s = a * a.transpose() / static_cast<double>(2 * d) + ridge * Matrix::Identity(d, d);
  return (0.5 * (s + s.transpose())).eval();
}

inline Matrix random_orthogonal(Rng& rng, Index d) {
  Eigen::HouseholderQR<Matrix> qr(gaussian_matrix(rng, d, d));
  return qr.householderQ() * Matrix::Identity(d, d);
}

inline Matrix random_orthonormal(Rng& rng, Index n, Index k) {
  Eigen::HouseholderQR<Matrix> qr(gaussian_matrix(rng, n, k));
  return qr.householderQ() * Matrix::Identity(n, k);
}

inline CovarianceModel random_covariance_model(Rng& rng, Index p, Index q) {
  return CovarianceModel::from_joint(random_pd(rng, p + q), p);
}

/// Gaussian sample with joint covariance `joint` (Cholesky factor).
inline PairedDataset gaussian_sample(Rng& rng, const Matrix& joint, Index p, Index n) {
  Eigen::LLT<Matrix> llt(joint);
  const Matrix z = gaussian_matrix(rng, n, joint.rows());
  const Matrix s = z * llt.matrixL().transpose();
  return PairedDataset::make(s.leftCols(p), s.rightCols(joint.rows() - p));
}

/// Variate-space sin^2 between two single directions under metric G.
inline double variate_sin2(const Vector& a, const Vector& b, const Matrix& g) {
  const double ab = a.dot(g * b);
  const double denom = a.dot(g * a) * b.dot(g * b);
  return denom > 0.0 ? 1.0 - ab * ab / denom : 1.0;
}

}  // namespace rcca::testing
