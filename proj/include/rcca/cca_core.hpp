#pragma once

// Exact canonical decomposition of a covariance model through the SVD of the
// whitened cross-covariance T = Sxx^{-1/2} Sxy Syy^{-1/2}, sample CCA, and
// canonical correlations between blocks of variates.

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rcca/datamodel.hpp"
#include "rcca/linalg.hpp"

namespace rcca {

/// Where an estimate came from and anything a consumer should know about it.
struct Provenance {
  std::string algorithm = "cca";
  double penalty = std::numeric_limits<double>::quiet_NaN();
  std::optional<int> fold;  // training fold; nullopt means the full sample
  std::uint64_t seed = 0;
  bool degenerate = false;
  bool converged = true;
  std::map<std::string, double> diagnostics;
  std::vector<std::string> warnings;

  std::string fold_label() const { return fold ? std::to_string(*fold) : std::string("full"); }
};

/// K pairs of canonical directions with their correlations.
struct CcaEstimate {
  Matrix u_dirs;  // p x K
  Matrix v_dirs;  // q x K
  Vector rho;     // K
  Provenance provenance;

  Index k() const { return rho.size(); }
  Index p() const { return u_dirs.rows(); }
  Index q() const { return v_dirs.rows(); }

  CcaEstimate leading(Index k) const {
    CcaEstimate out = *this;
    out.u_dirs = u_dirs.leftCols(k);
    out.v_dirs = v_dirs.leftCols(k);
    out.rho = rho.head(k);
    return out;
  }
};

/// Canonical decomposition of `cov` keeping the top K pairs.
///
/// Within-view blocks have eigenvalues floored at `floor_eps` (per block
/// default 1e-12 * trace / d) before the inverse square root is taken; the
/// floors used are recorded in the provenance diagnostics.
inline CcaEstimate cca_from_covariance(const CovarianceModel& cov, Index k,
                                       std::optional<double> floor_eps = std::nullopt) {
  if (k < 0 || k > std::min(cov.p(), cov.q())) {
    throw InvalidInput("cca_from_covariance: K must lie in [0, min(p, q)]");
  }
  detail::require_finite(cov.sxy, "cca_from_covariance");
  const double floor_x = floor_eps.value_or(default_floor(cov.sxx));
  const double floor_y = floor_eps.value_or(default_floor(cov.syy));
  const Matrix wx = sym_matrix_power(cov.sxx, MatrixPower::InverseSqrt, floor_x);
  const Matrix wy = sym_matrix_power(cov.syy, MatrixPower::InverseSqrt, floor_y);
  const Matrix target = wx * cov.sxy * wy;
  const CompactSvd svd = thin_svd(target);

  CcaEstimate est;
  est.u_dirs = wx * svd.left.leftCols(k);
  est.v_dirs = wy * svd.right.leftCols(k);
  est.rho = svd.singular_values.head(k);
  est.provenance.algorithm = "cca";
  est.provenance.diagnostics["floor_x"] = floor_x;
  est.provenance.diagnostics["floor_y"] = floor_y;
  return est;
}

/// Classical sample CCA. When a within-view covariance is rank deficient
/// (max(p, q) >= n, or an eigenvalue at the floor) the estimate is flagged
/// degenerate: the leading sample correlations are then trivially one.
inline CcaEstimate sample_cca(const PairedDataset& data, Index k) {
  const auto [centred, cov] = center_and_covariance(data);
  CcaEstimate est = cca_from_covariance(cov, k);
  est.provenance.algorithm = "sample_cca";
  bool deficient = std::max(data.p(), data.q()) >= data.n();
  if (!deficient) {
    const double min_x = symmetric_eigen(cov.sxx).eigenvalues.minCoeff();
    const double min_y = symmetric_eigen(cov.syy).eigenvalues.minCoeff();
    deficient = min_x <= est.provenance.diagnostics["floor_x"] || min_y <= est.provenance.diagnostics["floor_y"];
  }
  if (deficient) {
    est.provenance.degenerate = true;
    est.provenance.warnings.push_back("rank-deficient within-view covariance: sample correlations are trivially one");
  }
  return est;
}

/// Sample correlation (1/n) a^T b / sqrt(Var a Var b) without re-centring;
/// zero when either vector has zero variance.
inline double empirical_corr(const Vector& a, const Vector& b) {
  const double aa = a.squaredNorm();
  const double bb = b.squaredNorm();
  if (!(aa > 0.0) || !(bb > 0.0)) return 0.0;
  return a.dot(b) / std::sqrt(aa * bb);
}

namespace detail {

inline void require_nonzero_variance(const Matrix& m, const char* block) {
  for (Index c = 0; c < m.cols(); ++c) {
    const double var = m.col(c).squaredNorm() / static_cast<double>(std::max<Index>(m.rows(), 1));
    if (!(var > 1e-300)) {
      throw InvalidInput(std::string("empirical_canonical_correlations: column ") + std::to_string(c) +
                         " of " + block + " has zero variance");
    }
  }
}

}  // namespace detail

/// Top-K sample canonical correlations between two variate blocks (columns
/// assumed centred), computed from their joint sample covariance.
inline Vector empirical_canonical_correlations(const Matrix& z, const Matrix& w) {
  if (z.rows() != w.rows()) throw InvalidInput("empirical_canonical_correlations: row counts differ");
  detail::require_nonzero_variance(z, "Z");
  detail::require_nonzero_variance(w, "W");
  const double inv_n = 1.0 / static_cast<double>(z.rows());
  CovarianceModel cov;
  cov.sxx = inv_n * z.transpose() * z;
  cov.sxy = inv_n * z.transpose() * w;
  cov.syy = inv_n * w.transpose() * w;
  const Index k = std::min(z.cols(), w.cols());
  return cca_from_covariance(cov, k).rho.cwiseMin(1.0);
}

/// Same quantity by a second route: singular values of Qz^T Qw for
/// orthonormal bases of the two column spaces. Rank-deficient blocks are
/// reduced rather than rejected and missing correlations are reported as 0.
inline Vector block_canonical_correlations(const Matrix& z, const Matrix& w) {
  const Index k = std::min(z.cols(), w.cols());
  Vector out = Vector::Zero(k);
  const Matrix qz = orthonormal_basis(z);
  const Matrix qw = orthonormal_basis(w);
  if (qz.cols() == 0 || qw.cols() == 0) return out;
  const Vector cos = canonical_angles(qz, qw).cosines;
  out.head(std::min(k, cos.size())) = cos.head(std::min(k, cos.size()));
  return out;
}

}  // namespace rcca
