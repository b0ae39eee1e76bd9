#pragma once

// Graphical Lasso: maximise  log det W - trace(C W) - lambda * sum_{i != j} |W_ij|
// over positive definite W, by ADMM on the splitting W = Z.
//
// The W-step is the exact proximal map of -log det (one symmetric
// eigendecomposition), the Z-step soft-thresholds off-diagonal entries. The
// returned precision is the sparse iterate Z, certified by the KKT residual.
// Connected components of the graph {|C_ij| > lambda} are solved
// independently; for a penalty above every off-diagonal |C_ij| this gives the
// exact diagonal solution without iterating.

#include <cmath>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "rcca/linalg.hpp"

namespace rcca {

struct GlassoDiagnostics {
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double kkt_residual = 0.0;
  int components = 0;
};

/// Sparse precision estimate together with its inverse.
struct PrecisionEstimate {
  Matrix omega;
  Matrix sigma;
  double lambda = 0.0;
  GlassoDiagnostics diagnostics;

  /// Nonzero strictly-off-diagonal entries (both triangles).
  Index offdiag_nonzeros() const {
    Index count = 0;
    for (Index j = 0; j < omega.cols(); ++j)
      for (Index i = 0; i < omega.rows(); ++i)
        if (i != j && omega(i, j) != 0.0) ++count;
    return count;
  }
};

class GlassoConvergenceFailure : public ConvergenceFailure {
public:
  GlassoConvergenceFailure(const std::string& what, GlassoDiagnostics d)
      : ConvergenceFailure(what), diagnostics(d) {}
  GlassoDiagnostics diagnostics;
};

struct GlassoOptions {
  double tol = 1e-7;     // on the KKT residual
  int max_iter = 5000;
  double admm_rho = 1.0;  // initial augmented-Lagrangian weight
};

/// Largest violation of the stationarity conditions at `omega`:
///   (omega^{-1} - C)_ii = 0,
///   |(omega^{-1} - C)_ij| <= lambda            where omega_ij == 0,
///   (omega^{-1} - C)_ij = lambda sign(omega_ij) otherwise.
inline double kkt_residual(const Matrix& c, const Matrix& omega, double lambda) {
  if (omega.rows() != omega.cols() || omega.rows() != c.rows() || c.rows() != c.cols()) {
    throw InvalidInput("kkt_residual: dimension mismatch");
  }
  const Index d = omega.rows();
  Eigen::LLT<Matrix> llt(0.5 * (omega + omega.transpose()));
  if (llt.info() != Eigen::Success) throw InvalidInput("kkt_residual: omega is not positive definite");
  const Matrix grad = llt.solve(Matrix::Identity(d, d)) - c;
  double worst = 0.0;
  for (Index j = 0; j < d; ++j) {
    for (Index i = 0; i < d; ++i) {
      double v;
      if (i == j) {
        v = std::abs(grad(i, i));
      } else if (omega(i, j) == 0.0) {
        v = std::max(0.0, std::abs(grad(i, j)) - lambda);
      } else {
        v = std::abs(grad(i, j) - lambda * (omega(i, j) > 0.0 ? 1.0 : -1.0));
      }
      worst = std::max(worst, v);
    }
  }
  return worst;
}

namespace detail {

inline Matrix soft_threshold_offdiag(const Matrix& a, double t) {
  Matrix out = a;
  for (Index j = 0; j < a.cols(); ++j) {
    for (Index i = 0; i < a.rows(); ++i) {
      if (i == j) continue;
      const double v = a(i, j);
      out(i, j) = v > t ? v - t : (v < -t ? v + t : 0.0);
    }
  }
  return out;
}

struct GlassoBlockResult {
  Matrix omega;
  GlassoDiagnostics diagnostics;
  bool certified = false;
};

inline GlassoBlockResult glasso_admm_block(const Matrix& c, double lambda, const GlassoOptions& opt) {
  const Index d = c.rows();
  GlassoBlockResult res;
  double rho = opt.admm_rho;
  Matrix z = Matrix::Zero(d, d);
  for (Index i = 0; i < d; ++i) z(i, i) = 1.0 / c(i, i);
  Matrix u = Matrix::Zero(d, d);
  Matrix w(d, d);
  Eigen::SelfAdjointEigenSolver<Matrix> eig;
  for (int it = 1; it <= opt.max_iter; ++it) {
    // W-step: rho W - W^{-1} = rho (Z - U) - C, solved in the eigenbasis.
    const Matrix rhs = rho * (z - u) - c;
    eig.compute(0.5 * (rhs + rhs.transpose()));
    const Vector& a = eig.eigenvalues();
    Vector wd(d);
    for (Index i = 0; i < d; ++i) wd(i) = (a(i) + std::sqrt(a(i) * a(i) + 4.0 * rho)) / (2.0 * rho);
    w = eig.eigenvectors() * wd.asDiagonal() * eig.eigenvectors().transpose();
    w = (0.5 * (w + w.transpose())).eval();

    const Matrix z_old = z;
    z = soft_threshold_offdiag(w + u, lambda / rho);
    z = (0.5 * (z + z.transpose())).eval();
    u += w - z;

    const double r = (w - z).norm();
    const double s = rho * (z - z_old).norm();
    res.diagnostics.iterations = it;
    res.diagnostics.primal_residual = r;
    res.diagnostics.dual_residual = s;

    Eigen::LLT<Matrix> llt(z);
    if (llt.info() == Eigen::Success) {
      const double kkt = kkt_residual(c, z, lambda);
      res.diagnostics.kkt_residual = kkt;
      if (kkt <= opt.tol) {
        res.omega = z;
        res.certified = true;
        return res;
      }
    } else {
      res.diagnostics.kkt_residual = std::numeric_limits<double>::infinity();
    }

    // Residual balancing.
    if (r > 10.0 * s) {
      rho *= 2.0;
      u /= 2.0;
    } else if (s > 10.0 * r) {
      rho /= 2.0;
      u *= 2.0;
    }
  }
  res.omega = w;
  return res;
}

// Connected components of {(i, j) : |C_ij| > lambda}.
inline std::vector<std::vector<Index>> threshold_components(const Matrix& c, double lambda) {
  const Index d = c.rows();
  std::vector<Index> parent(static_cast<std::size_t>(d));
  std::iota(parent.begin(), parent.end(), Index{0});
  auto find = [&](Index i) {
    while (parent[static_cast<std::size_t>(i)] != i) {
      parent[static_cast<std::size_t>(i)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(i)])];
      i = parent[static_cast<std::size_t>(i)];
    }
    return i;
  };
  for (Index j = 0; j < d; ++j)
    for (Index i = 0; i < j; ++i)
      if (std::abs(c(i, j)) > lambda) parent[static_cast<std::size_t>(find(i))] = find(j);
  std::vector<std::vector<Index>> groups;
  std::vector<Index> slot(static_cast<std::size_t>(d), -1);
  for (Index i = 0; i < d; ++i) {
    const Index root = find(i);
    if (slot[static_cast<std::size_t>(root)] < 0) {
      slot[static_cast<std::size_t>(root)] = static_cast<Index>(groups.size());
      groups.emplace_back();
    }
    groups[static_cast<std::size_t>(slot[static_cast<std::size_t>(root)])].push_back(i);
  }
  return groups;
}

}  // namespace detail

inline PrecisionEstimate glasso_fit(const Matrix& c, double lambda, const GlassoOptions& opt = {}) {
  detail::require_finite(c, "glasso_fit");
  detail::require_symmetric(c, 1e-10, "glasso_fit");
  if (!(lambda > 0.0)) throw InvalidInput("glasso_fit: lambda must be positive");
  const Index d = c.rows();
  for (Index i = 0; i < d; ++i) {
    if (!(c(i, i) > 0.0)) throw InvalidInput("glasso_fit: covariance has a non-positive diagonal entry");
  }

  PrecisionEstimate est;
  est.lambda = lambda;
  est.omega = Matrix::Zero(d, d);
  bool certified = true;
  const auto groups = detail::threshold_components(c, lambda);
  est.diagnostics.components = static_cast<int>(groups.size());
  for (const auto& g : groups) {
    const auto m = static_cast<Index>(g.size());
    if (m == 1) {
      est.omega(g[0], g[0]) = 1.0 / c(g[0], g[0]);
      continue;
    }
    Matrix sub(m, m);
    for (Index a = 0; a < m; ++a)
      for (Index b = 0; b < m; ++b) sub(a, b) = c(g[static_cast<std::size_t>(a)], g[static_cast<std::size_t>(b)]);
    const auto block = detail::glasso_admm_block(sub, lambda, opt);
    certified = certified && block.certified;
    est.diagnostics.iterations = std::max(est.diagnostics.iterations, block.diagnostics.iterations);
    est.diagnostics.primal_residual = std::max(est.diagnostics.primal_residual, block.diagnostics.primal_residual);
    est.diagnostics.dual_residual = std::max(est.diagnostics.dual_residual, block.diagnostics.dual_residual);
    for (Index a = 0; a < m; ++a)
      for (Index b = 0; b < m; ++b)
        est.omega(g[static_cast<std::size_t>(a)], g[static_cast<std::size_t>(b)]) = block.omega(a, b);
  }

  Eigen::LLT<Matrix> llt(est.omega);
  if (llt.info() != Eigen::Success) {
    throw GlassoConvergenceFailure("glasso_fit: iterate is not positive definite", est.diagnostics);
  }
  est.diagnostics.kkt_residual = kkt_residual(c, est.omega, lambda);
  if (!certified || est.diagnostics.kkt_residual > opt.tol) {
    std::ostringstream msg;
    msg << "glasso_fit: no certificate after " << est.diagnostics.iterations
        << " iterations (kkt residual " << est.diagnostics.kkt_residual << ", tol " << opt.tol << ")";
    throw GlassoConvergenceFailure(msg.str(), est.diagnostics);
  }
  est.sigma = llt.solve(Matrix::Identity(d, d));
  est.sigma = (0.5 * (est.sigma + est.sigma.transpose())).eval();
  return est;
}

/// Value of the penalised log-likelihood at `omega`.
inline double glasso_objective(const Matrix& c, const Matrix& omega, double lambda) {
  Eigen::LLT<Matrix> llt(omega);
  if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
  const Matrix l = llt.matrixL();
  const double logdet = 2.0 * l.diagonal().array().log().sum();
  double offdiag = 0.0;
  for (Index j = 0; j < omega.cols(); ++j)
    for (Index i = 0; i < omega.rows(); ++i)
      if (i != j) offdiag += std::abs(omega(i, j));
  return logdet - (c * omega).trace() - lambda * offdiag;
}

}  // namespace rcca
