#pragma once

// Dense linear-algebra kernels shared by every other module: symmetric
// eigendecomposition, compact SVD, symmetric matrix powers, principal angles
// between subspaces and Gram-Schmidt under a general metric.
//
// All functions are pure; Eigen provides the underlying factorisations.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>

#include "rcca/error.hpp"

namespace rcca {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

namespace detail {

inline void require_finite(const Matrix& a, const char* what) {
  if (!a.allFinite()) {
    throw InvalidInput(std::string(what) + ": matrix has non-finite entries");
  }
}

inline double max_abs(const Matrix& a) {
  return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff();
}

inline double asymmetry(const Matrix& a) {
  return a.size() == 0 ? 0.0 : (a - a.transpose()).cwiseAbs().maxCoeff();
}

// Symmetric within `tol`, scaled by the largest entry when that exceeds one.
inline void require_symmetric(const Matrix& a, double tol, const char* what) {
  if (a.rows() != a.cols()) {
    throw InvalidInput(std::string(what) + ": matrix is not square");
  }
  const double dev = asymmetry(a);
  if (dev > tol * std::max(1.0, max_abs(a))) {
    std::ostringstream msg;
    msg << what << ": matrix is not symmetric (max |A - A^T| = " << dev << ")";
    throw InvalidInput(msg.str());
  }
}

// Flip column k of `left` (and of `right`, when given) so that the
// largest-magnitude entry of left.col(k) is positive; ties go to the lowest
// index.
inline void canonicalise_signs(Matrix& left, Matrix* right) {
  for (Index k = 0; k < left.cols(); ++k) {
    Index best = 0;
    double best_abs = -1.0;
    for (Index i = 0; i < left.rows(); ++i) {
      const double v = std::abs(left(i, k));
      if (v > best_abs) {
        best_abs = v;
        best = i;
      }
    }
    if (left.rows() > 0 && left(best, k) < 0.0) {
      left.col(k) *= -1.0;
      if (right != nullptr) right->col(k) *= -1.0;
    }
  }
}

}  // namespace detail

/// Eigendecomposition A = Q diag(eigenvalues) Q^T of a symmetric matrix,
/// eigenvalues sorted descending.
struct SpectralDecomposition {
  Vector eigenvalues;
  Matrix eigenvectors;

  Matrix reconstruct() const {
    return eigenvectors * eigenvalues.asDiagonal() * eigenvectors.transpose();
  }
};

inline SpectralDecomposition symmetric_eigen(const Matrix& a) {
  detail::require_finite(a, "symmetric_eigen");
  detail::require_symmetric(a, 1e-10, "symmetric_eigen");
  const Index d = a.rows();
  SpectralDecomposition out;
  if (d == 0) return out;
  // Eigen reads only the lower triangle; symmetrise so both halves count.
  const Matrix sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym);
  out.eigenvalues = solver.eigenvalues().reverse();
  out.eigenvectors = solver.eigenvectors().rowwise().reverse();
  detail::canonicalise_signs(out.eigenvectors, nullptr);
  return out;
}

/// A = left * diag(singular_values) * right^T with orthonormal factors and
/// descending nonnegative singular values.
struct CompactSvd {
  Matrix left;
  Vector singular_values;
  Matrix right;

  Index rank() const { return singular_values.size(); }

  Matrix reconstruct() const {
    return left * singular_values.asDiagonal() * right.transpose();
  }
};

/// All min(p, q) singular triples, sign-canonicalised; nothing is dropped.
inline CompactSvd thin_svd(const Matrix& a) {
  detail::require_finite(a, "svd");
  CompactSvd out;
  if (a.size() == 0) {
    out.left = Matrix(a.rows(), 0);
    out.right = Matrix(a.cols(), 0);
    return out;
  }
  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  out.left = svd.matrixU();
  out.singular_values = svd.singularValues();
  out.right = svd.matrixV();
  detail::canonicalise_signs(out.left, &out.right);
  return out;
}

/// Compact SVD: singular values at or below rank_tol * sigma_1 are dropped.
inline CompactSvd compact_svd(const Matrix& a, double rank_tol = 1e-10) {
  if (!(rank_tol >= 0.0)) throw InvalidInput("compact_svd: rank_tol must be nonnegative");
  CompactSvd full = thin_svd(a);
  if (full.singular_values.size() == 0) return full;
  const double cutoff = rank_tol * full.singular_values(0);
  Index k = 0;
  while (k < full.singular_values.size() && full.singular_values(k) > cutoff) ++k;
  full.left = full.left.leftCols(k).eval();
  full.right = full.right.leftCols(k).eval();
  full.singular_values = full.singular_values.head(k).eval();
  return full;
}

enum class MatrixPower { Inverse, InverseSqrt, Sqrt };

inline double power_exponent(MatrixPower p) {
  switch (p) {
    case MatrixPower::Inverse: return -1.0;
    case MatrixPower::InverseSqrt: return -0.5;
    case MatrixPower::Sqrt: return 0.5;
  }
  return 0.0;
}

/// Eigenvalue floor used when none is supplied: 1e-12 * trace(A) / d.
inline double default_floor(const Matrix& a) {
  if (a.rows() == 0) return std::numeric_limits<double>::min();
  const double f = 1e-12 * a.trace() / static_cast<double>(a.rows());
  return std::max(f, std::numeric_limits<double>::min());
}

/// A^power for symmetric PSD A, with eigenvalues clamped below at floor_eps.
inline Matrix sym_matrix_power(const Matrix& a, MatrixPower power,
                               std::optional<double> floor_eps = std::nullopt) {
  const double floor = floor_eps.value_or(default_floor(a));
  if (!(floor > 0.0)) throw InvalidInput("sym_matrix_power: floor_eps must be positive");
  const SpectralDecomposition eig = symmetric_eigen(a);
  const double e = power_exponent(power);
  Vector powered(eig.eigenvalues.size());
  for (Index i = 0; i < powered.size(); ++i) {
    powered(i) = std::pow(std::max(eig.eigenvalues(i), floor), e);
  }
  Matrix out = eig.eigenvectors * powered.asDiagonal() * eig.eigenvectors.transpose();
  return 0.5 * (out + out.transpose());
}

/// Max-entry deviation of Z^T Z from the identity.
inline double orthonormality_deviation(const Matrix& z) {
  if (z.cols() == 0) return 0.0;
  return (z.transpose() * z - Matrix::Identity(z.cols(), z.cols())).cwiseAbs().maxCoeff();
}

/// Cosines of the principal angles between two subspaces, descending.
///
/// `reference_dim` is the dimension of the first subspace; sin^2 Theta is
/// reported relative to it, which is the usual squared sin-theta distance
/// when both subspaces have the same dimension.
struct PrincipalAngles {
  Vector cosines;
  Index reference_dim = 0;

  double cos2_theta() const { return cosines.squaredNorm(); }
  double sin2_theta() const { return static_cast<double>(reference_dim) - cos2_theta(); }
};

inline PrincipalAngles canonical_angles(const Matrix& z, const Matrix& w, double ortho_tol = 1e-8) {
  if (z.rows() != w.rows()) throw InvalidInput("canonical_angles: row counts differ");
  for (const Matrix* m : {&z, &w}) {
    const double dev = orthonormality_deviation(*m);
    if (dev > ortho_tol) {
      std::ostringstream msg;
      msg << "canonical_angles: columns not orthonormal (max |G - I| = " << dev << ")";
      throw InvalidInput(msg.str());
    }
  }
  PrincipalAngles out;
  out.reference_dim = z.cols();
  const Matrix cross = z.transpose() * w;
  if (cross.size() == 0) {
    out.cosines = Vector(0);
    return out;
  }
  Eigen::JacobiSVD<Matrix> svd(cross);
  out.cosines = svd.singularValues().cwiseMin(1.0).cwiseMax(0.0);
  return out;
}

namespace detail {

// Two-pass modified Gram-Schmidt under <a, b> = a^T G b. Columns whose
// residual norm falls to `drop_tol` times their original norm are either
// reported (strict) or skipped.
inline Matrix gram_schmidt_impl(const Matrix& m, const Matrix* g, double drop_tol, bool strict) {
  const Index d = m.rows();
  Matrix basis(d, m.cols());
  Index kept = 0;
  auto inner = [&](const Vector& a, const Vector& b) {
    return g == nullptr ? a.dot(b) : a.dot(*g * b);
  };
  for (Index k = 0; k < m.cols(); ++k) {
    Vector col = m.col(k);
    const double original = std::sqrt(std::max(inner(col, col), 0.0));
    for (int pass = 0; pass < 2; ++pass) {
      for (Index j = 0; j < kept; ++j) {
        col -= inner(basis.col(j), col) * basis.col(j);
      }
    }
    const double norm = std::sqrt(std::max(inner(col, col), 0.0));
    if (!(original > 0.0) || norm <= drop_tol * original) {
      if (strict) {
        std::ostringstream msg;
        msg << "gram_schmidt_metric: column " << k << " is linearly dependent on earlier columns";
        throw InvalidInput(msg.str());
      }
      continue;
    }
    basis.col(kept++) = col / norm;
  }
  return basis.leftCols(kept);
}

}  // namespace detail

/// Orthonormalise the columns of M under the metric G (G-orthonormal output,
/// column k spanning the same space as the first k input columns).
inline Matrix gram_schmidt_metric(const Matrix& m, const Matrix& g) {
  detail::require_finite(m, "gram_schmidt_metric");
  if (g.rows() != m.rows() || g.cols() != m.rows()) {
    throw InvalidInput("gram_schmidt_metric: metric dimension does not match");
  }
  detail::require_symmetric(g, 1e-10, "gram_schmidt_metric");
  return detail::gram_schmidt_impl(m, &g, 1e-10, true);
}

inline Matrix gram_schmidt(const Matrix& m) {
  detail::require_finite(m, "gram_schmidt");
  return detail::gram_schmidt_impl(m, nullptr, 1e-10, true);
}

/// Orthonormal basis (Euclidean, or under G) for span(M), skipping columns
/// that are numerically dependent. The column count is the effective rank.
inline Matrix orthonormal_basis(const Matrix& m, double drop_tol = 1e-10) {
  return detail::gram_schmidt_impl(m, nullptr, drop_tol, false);
}

inline Matrix orthonormal_basis(const Matrix& m, const Matrix& g, double drop_tol = 1e-10) {
  return detail::gram_schmidt_impl(m, &g, drop_tol, false);
}

/// Squared sin-theta distance between span(A) and span(B), computed on
/// orthonormalised bases. Dimension is taken from span(A)'s nominal column
/// count so a rank-deficient estimate is charged for the missing directions.
inline double sin2_theta_between(const Matrix& a, const Matrix& b) {
  const Matrix qa = orthonormal_basis(a);
  const Matrix qb = orthonormal_basis(b);
  const double cos2 = (qa.cols() == 0 || qb.cols() == 0)
                          ? 0.0
                          : canonical_angles(qa, qb).cos2_theta();
  return std::clamp(static_cast<double>(a.cols()) - cos2, 0.0, static_cast<double>(a.cols()));
}

}  // namespace rcca
