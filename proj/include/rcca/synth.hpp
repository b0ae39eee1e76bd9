#pragma once

// Synthetic covariance models and Gaussian sampling: planted canonical pairs,
// power-law graphical models, and parametric-bootstrap covariances fitted to
// a dataset.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "rcca/cca_core.hpp"
#include "rcca/datamodel.hpp"
#include "rcca/estimators.hpp"
#include "rcca/glasso.hpp"
#include "rcca/linalg.hpp"
#include "rcca/random.hpp"

namespace rcca {

enum class WithinView { SuoSp, Identity };

inline std::string to_string(WithinView w) { return w == WithinView::SuoSp ? "suo_sp" : "identity"; }

inline WithinView parse_within_view(const std::string& s) {
  if (s == "suo_sp") return WithinView::SuoSp;
  if (s == "identity") return WithinView::Identity;
  throw InvalidInput("unknown within-view structure '" + s + "' (expected suo_sp or identity)");
}

/// Banded precision W_m with 1 on the diagonal, 0.5 and 0.4 on the first two
/// off-diagonals.
inline Matrix suo_band_precision(Index m) {
  Matrix w = Matrix::Identity(m, m);
  for (Index i = 0; i < m; ++i) {
    if (i + 1 < m) w(i, i + 1) = w(i + 1, i) = 0.5;
    if (i + 2 < m) w(i, i + 2) = w(i + 2, i) = 0.4;
  }
  return w;
}

struct PlantedModel {
  CovarianceModel cov;
  CcaEstimate truth;
};

/// Covariance with K planted canonical pairs:
/// Sxy = Sxx (sum_k rho_k u_k v_k^T) Syy with u, v orthonormal under Sxx, Syy.
inline PlantedModel canonical_pair_covariance(Index p, Index q, const Vector& rhos, Index support_size,
                                              WithinView within_view, std::uint64_t seed) {
  const Index k = rhos.size();
  if (k < 1) throw InvalidInput("canonical_pair_covariance: need at least one pair");
  for (Index i = 0; i < k; ++i) {
    if (!(rhos(i) > 0.0 && rhos(i) < 1.0)) throw InvalidInput("canonical_pair_covariance: rho outside (0,1)");
    if (i > 0 && !(rhos(i) < rhos(i - 1))) throw InvalidInput("canonical_pair_covariance: rhos must be strictly descending");
  }
  if (support_size < 1 || k * support_size > std::min(p, q)) {
    throw InvalidInput("canonical_pair_covariance: supports of size " + std::to_string(support_size) + " for " +
                       std::to_string(k) + " pairs do not fit in min(p,q)");
  }
  PlantedModel out;
  if (within_view == WithinView::SuoSp) {
    out.cov.sxx = sym_matrix_power(suo_band_precision(p), MatrixPower::Inverse);
    out.cov.syy = sym_matrix_power(suo_band_precision(q), MatrixPower::Inverse);
  } else {
    out.cov.sxx = Matrix::Identity(p, p);
    out.cov.syy = Matrix::Identity(q, q);
  }
  out.cov.sxx = 0.5 * (out.cov.sxx + out.cov.sxx.transpose());
  out.cov.syy = 0.5 * (out.cov.syy + out.cov.syy.transpose());

  Rng rng(seed);
  Matrix u = Matrix::Zero(p, k), v = Matrix::Zero(q, k);
  for (Index c = 0; c < k; ++c) {
    for (Index i = 0; i < support_size; ++i) u(c * support_size + i, c) = rng.uniform(-1.0, 1.0);
    for (Index i = 0; i < support_size; ++i) v(c * support_size + i, c) = rng.uniform(-1.0, 1.0);
  }
  u = gram_schmidt_metric(u, out.cov.sxx);
  v = gram_schmidt_metric(v, out.cov.syy);
  out.cov.sxy = out.cov.sxx * u * rhos.asDiagonal() * v.transpose() * out.cov.syy;
  out.cov.validate();

  out.truth.u_dirs = u;
  out.truth.v_dirs = v;
  out.truth.rho = rhos;
  out.truth.provenance.algorithm = "truth";
  out.truth.provenance.seed = seed;
  return out;
}

struct PowerlawGraph {
  Matrix precision;
  std::vector<std::pair<Index, Index>> edges;  // i < j
  std::vector<Index> degrees;
};

/// Sparse precision whose graph grows by preferential attachment (one edge
/// per new node, attachment weight degree + a with a = gamma - 3, giving a
/// degree tail exponent near gamma). Edge weights are uniform in
/// +-[scale/2, scale]; the diagonal is 1.1 times the absolute row sum.
inline PowerlawGraph powerlaw_precision(Index d, double gamma, double edge_weight_scale, std::uint64_t seed) {
  if (d < 4) throw InvalidInput("powerlaw_precision: d must be at least 4");
  if (!(gamma > 1.0)) throw InvalidInput("powerlaw_precision: gamma must exceed 1");
  if (!(edge_weight_scale > 0.0)) throw InvalidInput("powerlaw_precision: edge weight scale must be positive");
  Rng rng(seed);
  // Attachment offset must keep degree + a positive for degree-1 nodes.
  const double a = std::max(gamma - 3.0, -0.99);
  PowerlawGraph g;
  g.degrees.assign(static_cast<std::size_t>(d), 0);
  g.edges.push_back({0, 1});
  g.degrees[0] = g.degrees[1] = 1;
  for (Index t = 2; t < d; ++t) {
    double total = 0.0;
    for (Index i = 0; i < t; ++i) total += static_cast<double>(g.degrees[static_cast<std::size_t>(i)]) + a;
    double r = rng.uniform() * total;
    Index target = t - 1;
    for (Index i = 0; i < t; ++i) {
      r -= static_cast<double>(g.degrees[static_cast<std::size_t>(i)]) + a;
      if (r < 0.0) {
        target = i;
        break;
      }
    }
    g.edges.push_back({target, t});
    ++g.degrees[static_cast<std::size_t>(target)];
    ++g.degrees[static_cast<std::size_t>(t)];
  }
  g.precision = Matrix::Zero(d, d);
  for (const auto& [i, j] : g.edges) {
    const double mag = rng.uniform(0.5 * edge_weight_scale, edge_weight_scale);
    const double w = rng.uniform() < 0.5 ? -mag : mag;
    g.precision(i, j) = g.precision(j, i) = w;
  }
  for (Index i = 0; i < d; ++i) {
    const double row = g.precision.row(i).cwiseAbs().sum();
    g.precision(i, i) = row > 0.0 ? 1.1 * row : 1.0;
  }
  if (!(symmetric_eigen(g.precision).eigenvalues.minCoeff() > 0.0)) {
    throw std::logic_error("powerlaw_precision: construction is not positive definite");
  }
  return g;
}

/// Joint covariance (inverse of a power-law precision over p + q variables),
/// rescaled to unit variances.
inline CovarianceModel powerlaw_covariance(Index p, Index q, double gamma, double edge_weight_scale,
                                           std::uint64_t seed) {
  const PowerlawGraph g = powerlaw_precision(p + q, gamma, edge_weight_scale, seed);
  Matrix s = sym_matrix_power(g.precision, MatrixPower::Inverse);
  const Vector sd = s.diagonal().cwiseSqrt();
  s = sd.cwiseInverse().asDiagonal() * s * sd.cwiseInverse().asDiagonal();
  return CovarianceModel::from_joint(0.5 * (s + s.transpose()), p);
}

enum class BootstrapMode { Glasso, SccaRidge };

struct BootstrapSpec {
  BootstrapMode mode = BootstrapMode::Glasso;
  double lambda = 0.01;  // glasso penalty, or sCCA tau
  double alpha = 0.0;    // ridge added to the within-view blocks (scca_ridge)
  Index k = 1;           // sCCA pairs (scca_ridge)
  GlassoOptions glasso;
  LadmmOptions ladmm;
};

struct BootstrapModel {
  CovarianceModel cov;
  Vector d_hat;  // scca_ridge: planted correlations, descending
  std::map<std::string, double> diagnostics;
};

/// Regularised covariance of `data` to sample parametric-bootstrap data from.
inline BootstrapModel bootstrap_covariance(const PairedDataset& data, const BootstrapSpec& spec) {
  if (!data.centred) throw InvalidInput("bootstrap_covariance: data must be centred");
  const CovarianceModel c = covariance_of_centred(data);
  BootstrapModel out;
  if (spec.mode == BootstrapMode::Glasso) {
    const PrecisionEstimate prec = glasso_fit(c.joint(), spec.lambda, spec.glasso);
    out.cov = CovarianceModel::from_joint(prec.sigma, data.p());
    out.diagnostics["glasso_iterations"] = static_cast<double>(prec.diagnostics.iterations);
    out.diagnostics["glasso_offdiag_nnz"] = static_cast<double>(prec.offdiag_nonzeros());
    return out;
  }
  if (!(spec.alpha >= 0.0)) throw InvalidInput("bootstrap_covariance: alpha must be non-negative");
  const Matrix sxx = c.sxx + spec.alpha * Matrix::Identity(data.p(), data.p());
  const Matrix syy = c.syy + spec.alpha * Matrix::Identity(data.q(), data.q());
  const CcaEstimate est = scca_fit(data, spec.lambda, spec.k, spec.ladmm);

  // Keep non-degenerate pairs, orthonormalised under the ridged blocks so the
  // planted correlations are exactly the canonical correlations of the output.
  std::vector<Index> keep;
  for (Index j = 0; j < est.u_dirs.cols(); ++j) {
    if (est.u_dirs.col(j).norm() > 1e-12 && est.v_dirs.col(j).norm() > 1e-12) keep.push_back(j);
  }
  Matrix u(data.p(), static_cast<Index>(keep.size())), v(data.q(), static_cast<Index>(keep.size()));
  for (std::size_t i = 0; i < keep.size(); ++i) {
    u.col(static_cast<Index>(i)) = est.u_dirs.col(keep[i]);
    v.col(static_cast<Index>(i)) = est.v_dirs.col(keep[i]);
  }
  if (u.cols() > 0) {
    u = orthonormal_basis(u, sxx);
    v = orthonormal_basis(v, syy);
  }
  const Index kept = std::min(u.cols(), v.cols());
  Vector d(kept);
  for (Index j = 0; j < kept; ++j) {
    const Vector xu = data.x * u.col(j), yv = data.y * v.col(j);
    double r = empirical_corr(xu, yv);
    if (r < 0.0) {
      v.col(j) *= -1.0;
      r = -r;
    }
    d(j) = r;
  }
  out.cov.sxx = sxx;
  out.cov.syy = syy;
  out.cov.sxy = sxx * u.leftCols(kept) * d.asDiagonal() * v.leftCols(kept).transpose() * syy;
  std::sort(d.begin(), d.end(), std::greater<>());
  out.d_hat = d;
  out.diagnostics["pairs_kept"] = static_cast<double>(kept);
  return out;
}

/// n i.i.d. Gaussian draws with the joint covariance of `cov`, using the
/// symmetric square root.
inline PairedDataset mvn_sample(const CovarianceModel& cov, Index n, std::uint64_t seed) {
  if (n < 1) throw InvalidInput("mvn_sample: n must be positive");
  const Matrix joint = cov.joint();
  detail::require_symmetric(joint, 1e-10 * std::max(1.0, detail::max_abs(joint)), "mvn_sample");
  const SpectralDecomposition eig = symmetric_eigen(joint);
  const double tol = 1e-10 * std::max(1.0, eig.eigenvalues.cwiseAbs().maxCoeff());
  if (eig.eigenvalues.minCoeff() < -tol) throw InvalidInput("mvn_sample: covariance is not positive semidefinite");
  const Vector root = eig.eigenvalues.cwiseMax(0.0).cwiseSqrt();
  const Matrix factor = eig.eigenvectors * root.asDiagonal() * eig.eigenvectors.transpose();
  Rng rng(seed);
  const Index d = joint.rows();
  Matrix z(n, d);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < d; ++j) z(i, j) = rng.normal();
  const Matrix s = z * factor;
  return PairedDataset::make(s.leftCols(cov.p()), s.rightCols(cov.q()));
}

}  // namespace rcca
