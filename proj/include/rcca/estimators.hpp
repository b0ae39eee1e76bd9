#pragma once

// Regularised CCA estimators behind one interface:
//
//   rcca  ridge CCA, within-view blocks (1 - c) C + c I
//   spls  penalised matrix decomposition of Cxy with l1/l2 constraints
//   scca  l1-penalised CCA solved by interleaved linearised ADMM
//   gcca  CCA of the inverse of a Graphical Lasso precision estimate
//
// Penalties are tied across the two views. Apart from spls (whose
// directions keep the unit l2 norm of their constraint set), every estimator
// rescales directions so that the training variates X u_k, Y v_k have unit
// sample variance.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "rcca/cca_core.hpp"
#include "rcca/datamodel.hpp"
#include "rcca/glasso.hpp"
#include "rcca/linalg.hpp"
#include "rcca/random.hpp"

namespace rcca {

enum class EstimatorKind { Rcca, Spls, Scca, Gcca };

inline std::string to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::Rcca: return "rcca";
    case EstimatorKind::Spls: return "spls";
    case EstimatorKind::Scca: return "scca";
    case EstimatorKind::Gcca: return "gcca";
  }
  return "?";
}

inline EstimatorKind parse_estimator_kind(const std::string& s) {
  if (s == "rcca") return EstimatorKind::Rcca;
  if (s == "spls") return EstimatorKind::Spls;
  if (s == "scca") return EstimatorKind::Scca;
  if (s == "gcca") return EstimatorKind::Gcca;
  throw InvalidInput("unknown estimator kind '" + s + "' (expected rcca, spls, scca or gcca)");
}

/// Knobs of the interleaved linearised-ADMM sCCA solver.
struct LadmmOptions {
  double lambda_step = 1.0;  // ADMM step-size parameter
  int n_steps_admm = 5;      // lADMM steps per u- or v-block
  double tol = 1e-6;         // outer stop: both weight vectors move less than this (l2)
  int max_outer = 500;
  bool recycle_duals = true;  // keep (z, xi) between blocks instead of restarting them
};

struct SplsOptions {
  double tol = 1e-10;
  int max_sweeps = 1000;
};

/// An estimator family, its tied penalty and solver settings.
struct EstimatorSpec {
  EstimatorKind kind = EstimatorKind::Rcca;
  double penalty = 0.0;
  Index k = 1;
  LadmmOptions ladmm;
  SplsOptions spls;
  GlassoOptions glasso;

  void validate() const {
    if (!std::isfinite(penalty)) throw InvalidInput("penalty must be finite");
    if (k < 1) throw InvalidInput("K must be at least 1");
    switch (kind) {
      case EstimatorKind::Rcca:
        if (penalty < 0.0 || penalty > 1.0) throw InvalidInput("rcca penalty c must lie in [0, 1]");
        break;
      case EstimatorKind::Spls:
        if (penalty < 1.0) throw InvalidInput("spls l1 radius s must be at least 1");
        break;
      case EstimatorKind::Scca:
        if (penalty < 0.0) throw InvalidInput("scca penalty tau must be nonnegative");
        break;
      case EstimatorKind::Gcca:
        if (!(penalty > 0.0)) throw InvalidInput("gcca penalty lambda must be positive");
        break;
    }
  }
};

namespace detail {

inline PairedDataset ensure_centred(const PairedDataset& data) {
  if (data.n() < 2) throw InvalidInput("estimator: need at least two samples");
  return data.centred ? data : center(data);
}

inline void check_k(const PairedDataset& data, Index k) {
  if (k < 1 || k > std::min(data.p(), data.q())) {
    throw InvalidInput("estimator: K must lie in [1, min(p, q)]");
  }
}

// Rescale each direction so its training variate has unit sample variance;
// a direction with a zero variate is left at zero and flags the estimate.
inline void normalise_variates(CcaEstimate& est, const PairedDataset& centred) {
  const double n = static_cast<double>(centred.n());
  bool zero = false;
  for (Index k = 0; k < est.k(); ++k) {
    const double sx = std::sqrt((centred.x * est.u_dirs.col(k)).squaredNorm() / n);
    const double sy = std::sqrt((centred.y * est.v_dirs.col(k)).squaredNorm() / n);
    if (sx > 1e-150) est.u_dirs.col(k) /= sx; else { est.u_dirs.col(k).setZero(); zero = true; }
    if (sy > 1e-150) est.v_dirs.col(k) /= sy; else { est.v_dirs.col(k).setZero(); zero = true; }
  }
  if (zero) {
    est.provenance.degenerate = true;
    est.provenance.warnings.push_back("zero-variance variate");
  }
}

inline Vector variate_correlations(const CcaEstimate& est, const PairedDataset& centred) {
  Vector rho(est.u_dirs.cols());
  for (Index k = 0; k < rho.size(); ++k) {
    rho(k) = empirical_corr(centred.x * est.u_dirs.col(k), centred.y * est.v_dirs.col(k));
  }
  return rho;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Ridge CCA

inline CovarianceModel ridge_covariance(const CovarianceModel& c, double ridge) {
  CovarianceModel r = c;
  r.sxx = (1.0 - ridge) * c.sxx + ridge * Matrix::Identity(c.p(), c.p());
  r.syy = (1.0 - ridge) * c.syy + ridge * Matrix::Identity(c.q(), c.q());
  return r;
}

inline CcaEstimate rcca_fit(const PairedDataset& data, double c, Index k) {
  if (!(c >= 0.0 && c <= 1.0)) throw InvalidInput("rcca_fit: c must lie in [0, 1]");
  detail::check_k(data, k);
  const PairedDataset centred = detail::ensure_centred(data);
  const CovarianceModel sample = covariance_of_centred(centred);
  CcaEstimate est = cca_from_covariance(ridge_covariance(sample, c), k);
  est.provenance.algorithm = "rcca";
  est.provenance.penalty = c;
  detail::normalise_variates(est, centred);
  return est;
}

// ---------------------------------------------------------------------------
// Sparse PLS (penalised matrix decomposition)

namespace detail {

inline Vector soft_threshold(const Vector& z, double t) {
  return z.unaryExpr([t](double v) { return v > t ? v - t : (v < -t ? v + t : 0.0); });
}

// argmax u^T z subject to ||u||_2 <= 1, ||u||_1 <= s: a normalised
// soft-threshold of z whose threshold is found by bisection.
inline Vector l1_l2_project(const Vector& z, double s) {
  const double zn = z.norm();
  if (!(zn > 0.0)) return Vector::Zero(z.size());
  Vector u = z / zn;
  if (u.lpNorm<1>() <= s) return u;
  double lo = 0.0, hi = z.cwiseAbs().maxCoeff();
  for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, hi); ++it) {
    const double mid = 0.5 * (lo + hi);
    const Vector st = soft_threshold(z, mid);
    const double n2 = st.norm();
    if (n2 > 0.0 && st.lpNorm<1>() / n2 > s) lo = mid; else hi = mid;
  }
  Vector st = soft_threshold(z, hi);
  const double n2 = st.norm();
  if (!(n2 > 0.0)) {
    // All mass on the largest entries; fall back to the largest coordinate.
    Index arg;
    z.cwiseAbs().maxCoeff(&arg);
    Vector e = Vector::Zero(z.size());
    e(arg) = z(arg) > 0 ? 1.0 : -1.0;
    return e;
  }
  return st / n2;
}

}  // namespace detail

inline CcaEstimate spls_fit(const PairedDataset& data, double s, Index k, const SplsOptions& opt = {}) {
  if (!(s >= 1.0)) throw InvalidInput("spls_fit: s must be at least 1");
  detail::check_k(data, k);
  const PairedDataset centred = detail::ensure_centred(data);
  Matrix residual = covariance_of_centred(centred).sxy;

  CcaEstimate est;
  est.u_dirs = Matrix::Zero(data.p(), k);
  est.v_dirs = Matrix::Zero(data.q(), k);
  est.provenance.algorithm = "spls";
  est.provenance.penalty = s;
  int total_sweeps = 0;
  for (Index pair = 0; pair < k; ++pair) {
    if (!(residual.norm() > 1e-14)) {
      est.provenance.degenerate = true;
      est.provenance.warnings.push_back("cross-covariance exhausted before pair " + std::to_string(pair + 1));
      break;
    }
    const CompactSvd init = thin_svd(residual);
    Vector v = init.right.col(0);
    Vector u = init.left.col(0);
    bool converged = false;
    for (int sweep = 0; sweep < opt.max_sweeps; ++sweep) {
      ++total_sweeps;
      const Vector u_new = detail::l1_l2_project(residual * v, s);
      const Vector v_new = detail::l1_l2_project(residual.transpose() * u_new, s);
      const double change = (u_new - u).norm() + (v_new - v).norm();
      u = u_new;
      v = v_new;
      if (change < opt.tol) {
        converged = true;
        break;
      }
    }
    if (!converged) {
      est.provenance.converged = false;
      est.provenance.warnings.push_back("pair " + std::to_string(pair + 1) + " did not converge");
    }
    const double d = u.dot(residual * v);
    residual -= d * u * v.transpose();
    est.u_dirs.col(pair) = u;
    est.v_dirs.col(pair) = v;
  }
  est.provenance.diagnostics["sweeps"] = total_sweeps;
  est.rho = detail::variate_correlations(est, centred);
  for (Index pair = 0; pair < k; ++pair) {
    if (est.u_dirs.col(pair).isZero(0.0) || est.v_dirs.col(pair).isZero(0.0)) est.provenance.degenerate = true;
  }
  return est;
}

// ---------------------------------------------------------------------------
// Sparse CCA by interleaved linearised ADMM
//
// With X, Y downscaled by sqrt(n), pair k solves
//   min -u^T X^T Y v + tau (|u|_1 + |v|_1)
//   s.t. ||X u|| <= 1, ||Y v|| <= 1, U^T X^T X u = 0, V^T Y^T Y v = 0
// alternating short lADMM blocks in u and v. Each block works on the
// constraint  Xt u - It z = 0  with Xt = [X; U^T X^T X], It = [I_n; 0], and
// the pair (z, xi) is carried from one block to the next.

namespace detail {

// Largest singular value squared of `a`, by power iteration on A^T A.
inline double op_norm_squared(const Matrix& a, double tol = 1e-8) {
  if (a.size() == 0) return 0.0;
  Vector x = Vector::Ones(a.cols()) / std::sqrt(static_cast<double>(a.cols()));
  double value = 0.0;
  for (int it = 0; it < 10000; ++it) {
    Vector y = a.transpose() * (a * x);
    const double next = y.norm();
    if (!(next > 0.0)) return 0.0;
    x = y / next;
    if (std::abs(next - value) <= tol * next) {
      value = next;
      break;
    }
    value = next;
  }
  return value;
}

inline Vector project_unit_ball(const Vector& z) {
  const double n = z.norm();
  return n > 1.0 ? Vector(z / n) : z;
}

struct LadmmBlock {
  const Matrix& xt;  // (n + k - 1) x p constraint matrix
  const Matrix& xs;  // n x p scaled data
  Index n;
  double mu;
  double lambda_step;
  double tau;
};

inline void ladmm_steps(const LadmmBlock& b, const Vector& grad, int steps, Vector& u, Vector& z, Vector& xi) {
  const double shift = b.mu * b.tau;
  for (int s = 0; s < steps; ++s) {
    Vector r = b.xt * u + xi;
    r.head(b.n) -= z;
    const Vector pre = u - (b.mu / b.lambda_step) * (b.xt.transpose() * r) + b.mu * grad;
    u = soft_threshold(pre, shift);
    const Vector xu = b.xs * u;
    z = project_unit_ball(xu + xi.head(b.n));
    Vector resid = b.xt * u;
    resid.head(b.n) -= z;
    xi += resid;
  }
}

inline void reset_duals(const Matrix& xt, const Matrix& xs, Index n, const Vector& u, Vector& z, Vector& xi) {
  z = project_unit_ball(xs * u);
  xi = xt * u;
  xi.head(n) -= z;
}

// Remove from u its component along span(prev) in the metric `g`.
inline Vector metric_orthogonal_complement(const Vector& u, const Matrix& prev, const Matrix& g) {
  if (prev.cols() == 0) return u;
  const Matrix gp = g * prev;
  const Matrix gram = prev.transpose() * gp;
  return u - prev * gram.ldlt().solve(gp.transpose() * u);
}

}  // namespace detail

inline CcaEstimate scca_fit(const PairedDataset& data, double tau, Index k, const LadmmOptions& opt = {}) {
  if (!(tau >= 0.0)) throw InvalidInput("scca_fit: tau must be nonnegative");
  if (!(opt.lambda_step > 0.0) || opt.n_steps_admm < 1 || opt.max_outer < 1) {
    throw InvalidInput("scca_fit: invalid lADMM options");
  }
  detail::check_k(data, k);
  const PairedDataset centred = detail::ensure_centred(data);
  const Index n = centred.n();
  const double root_n = std::sqrt(static_cast<double>(n));
  const Matrix xs = centred.x / root_n;
  const Matrix ys = centred.y / root_n;
  const Matrix cxx = xs.transpose() * xs;
  const Matrix cyy = ys.transpose() * ys;
  const Matrix cxy = xs.transpose() * ys;

  CompactSvd init = thin_svd(cxy.unaryExpr([tau](double v) {
    return v > tau ? v - tau : (v < -tau ? v + tau : 0.0);
  }));
  const CompactSvd plain = thin_svd(cxy);
  if (init.singular_values.size() == 0 || !(init.singular_values(0) > 0.0)) init = plain;

  CcaEstimate est;
  est.u_dirs = Matrix::Zero(data.p(), k);
  est.v_dirs = Matrix::Zero(data.q(), k);
  est.provenance.algorithm = "scca";
  est.provenance.penalty = tau;
  long inner_steps = 0;
  int outer_total = 0;

  for (Index pair = 0; pair < k; ++pair) {
    const Matrix prev_u = est.u_dirs.leftCols(pair);
    const Matrix prev_v = est.v_dirs.leftCols(pair);
    Matrix xt(n + pair, data.p());
    xt << xs, prev_u.transpose() * cxx;
    Matrix yt(n + pair, data.q());
    yt << ys, prev_v.transpose() * cyy;
    const double lx = detail::op_norm_squared(xt);
    const double ly = detail::op_norm_squared(yt);
    const double mu_x = lx > 0.0 ? opt.lambda_step / (2.0 * lx) : 0.0;
    const double mu_y = ly > 0.0 ? opt.lambda_step / (2.0 * ly) : 0.0;

    auto start = [&](const CompactSvd& svd, bool left, const Matrix& prev, const Matrix& g) {
      const Matrix& vecs = left ? svd.left : svd.right;
      Vector w = pair < vecs.cols() && svd.singular_values(pair) > 0.0 ? Vector(vecs.col(pair))
                                                                         : Vector::Zero(g.rows());
      w = detail::metric_orthogonal_complement(w, prev, g);
      const double scale = std::sqrt(std::max(w.dot(g * w), 0.0));
      return scale > 1e-12 ? Vector(w / scale) : Vector::Zero(g.rows());
    };
    Vector u = start(init, true, prev_u, cxx);
    Vector v = start(init, false, prev_v, cyy);
    if (u.isZero(0.0) || v.isZero(0.0)) {
      u = start(plain, true, prev_u, cxx);
      v = start(plain, false, prev_v, cyy);
    }

    Vector zu, xiu, zv, xiv;
    detail::reset_duals(xt, xs, n, u, zu, xiu);
    detail::reset_duals(yt, ys, n, v, zv, xiv);
    const detail::LadmmBlock ublock{xt, xs, n, mu_x, opt.lambda_step, tau};
    const detail::LadmmBlock vblock{yt, ys, n, mu_y, opt.lambda_step, tau};

    bool converged = false;
    int outer = 0;
    double last_move = 0.0;
    while (outer < opt.max_outer) {
      ++outer;
      const Vector u_old = u;
      const Vector v_old = v;
      if (!opt.recycle_duals) detail::reset_duals(xt, xs, n, u, zu, xiu);
      detail::ladmm_steps(ublock, cxy * v, opt.n_steps_admm, u, zu, xiu);
      if (!opt.recycle_duals) detail::reset_duals(yt, ys, n, v, zv, xiv);
      detail::ladmm_steps(vblock, cxy.transpose() * u, opt.n_steps_admm, v, zv, xiv);
      inner_steps += 2L * opt.n_steps_admm;
      last_move = std::max((u - u_old).norm(), (v - v_old).norm());
      if ((u - u_old).norm() < opt.tol && (v - v_old).norm() < opt.tol) {
        converged = true;
        break;
      }
    }
    outer_total += outer;
    est.provenance.diagnostics["outer_pair" + std::to_string(pair + 1)] = outer;
    if (!converged) {
      est.provenance.converged = false;
      est.provenance.warnings.push_back("pair " + std::to_string(pair + 1) + " reached max_outer (last move " +
                                        std::to_string(last_move) + ")");
    }
    if (!(u.norm() > 1e-12) || !(v.norm() > 1e-12)) {
      est.provenance.degenerate = true;
      est.provenance.warnings.push_back("pair " + std::to_string(pair + 1) + " penalised to zero");
      u.setZero();
      v.setZero();
    }
    // Unit sample variance, so later constraint rows are on a fixed scale.
    const double su = std::sqrt(std::max(u.dot(cxx * u), 0.0));
    const double sv = std::sqrt(std::max(v.dot(cyy * v), 0.0));
    est.u_dirs.col(pair) = su > 1e-150 ? Vector(u / su) : Vector::Zero(data.p());
    est.v_dirs.col(pair) = sv > 1e-150 ? Vector(v / sv) : Vector::Zero(data.q());
  }
  est.provenance.diagnostics["inner_steps"] = static_cast<double>(inner_steps);
  est.provenance.diagnostics["outer_iterations"] = outer_total;
  est.rho = detail::variate_correlations(est, centred);
  detail::normalise_variates(est, centred);
  return est;
}

// ---------------------------------------------------------------------------
// Graphical CCA

/// Canonical decomposition of the inverse of the Graphical Lasso precision
/// estimated from a joint covariance whose first p coordinates are view X.
inline std::pair<CcaEstimate, PrecisionEstimate> gcca_from_joint_covariance(const Matrix& joint, Index p,
                                                                            double lambda, Index k,
                                                                            const GlassoOptions& opt = {}) {
  PrecisionEstimate prec = glasso_fit(joint, lambda, opt);
  CcaEstimate est = cca_from_covariance(CovarianceModel::from_joint(prec.sigma, p), k);
  est.provenance.algorithm = "gcca";
  est.provenance.penalty = lambda;
  est.provenance.diagnostics["glasso_iterations"] = prec.diagnostics.iterations;
  est.provenance.diagnostics["glasso_kkt_residual"] = prec.diagnostics.kkt_residual;
  est.provenance.diagnostics["glasso_offdiag_nnz"] = static_cast<double>(prec.offdiag_nonzeros());
  if (est.k() > 0 && !(est.rho(0) > 1e-10)) {
    est.provenance.degenerate = true;
    est.provenance.warnings.push_back("estimated cross-covariance is zero");
  }
  return {std::move(est), std::move(prec)};
}

inline CcaEstimate gcca_fit(const PairedDataset& data, double lambda, Index k, const GlassoOptions& opt = {}) {
  if (!(lambda > 0.0)) throw InvalidInput("gcca_fit: lambda must be positive");
  detail::check_k(data, k);
  const PairedDataset centred = detail::ensure_centred(data);
  const Matrix joint = covariance_of_centred(centred).joint();
  CcaEstimate est = gcca_from_joint_covariance(joint, data.p(), lambda, k, opt).first;
  detail::normalise_variates(est, centred);
  return est;
}

// ---------------------------------------------------------------------------

inline CcaEstimate fit(const EstimatorSpec& spec, const PairedDataset& data) {
  spec.validate();
  switch (spec.kind) {
    case EstimatorKind::Rcca: return rcca_fit(data, spec.penalty, spec.k);
    case EstimatorKind::Spls: return spls_fit(data, spec.penalty, spec.k, spec.spls);
    case EstimatorKind::Scca: return scca_fit(data, spec.penalty, spec.k, spec.ladmm);
    case EstimatorKind::Gcca: return gcca_fit(data, spec.penalty, spec.k, spec.glasso);
  }
  throw InvalidInput("fit: unknown estimator");
}

/// One (penalty, fold) cell of a sweep: an estimate or the failure message.
struct TrajectoryCell {
  std::optional<CcaEstimate> estimate;
  std::string error;

  bool ok() const { return estimate.has_value(); }
};

/// Estimates over a penalty grid for every training fold and the full sample.
struct TrajectoryResult {
  EstimatorKind kind = EstimatorKind::Rcca;
  std::vector<double> grid;
  FoldPlan folds;
  // cells[penalty index][fold], fold == folds.folds is the full sample.
  std::vector<std::vector<TrajectoryCell>> cells;

  const TrajectoryCell& full(std::size_t penalty) const { return cells[penalty].back(); }
  const TrajectoryCell& fold(std::size_t penalty, int f) const { return cells[penalty][static_cast<std::size_t>(f)]; }

  /// Fold estimates for one penalty, or nullopt when any fold failed.
  std::optional<std::vector<CcaEstimate>> fold_estimates(std::size_t penalty) const {
    std::vector<CcaEstimate> out;
    for (int f = 0; f < folds.folds; ++f) {
      const auto& c = fold(penalty, f);
      if (!c.ok()) return std::nullopt;
      out.push_back(*c.estimate);
    }
    return out;
  }
};

/// Fit `spec` at every grid penalty on every training fold and on the full
/// sample. Failures are recorded per cell. Output does not depend on `jobs`.
inline TrajectoryResult sweep_trajectory(const EstimatorSpec& spec, const PairedDataset& data,
                                         const std::vector<double>& grid, const FoldPlan& folds,
                                         unsigned jobs = 1) {
  if (grid.empty()) throw InvalidInput("sweep_trajectory: grid is empty");
  const bool up = grid.size() < 2 || grid[1] > grid[0];
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (up ? !(grid[i] > grid[i - 1]) : !(grid[i] < grid[i - 1])) {
      throw InvalidInput("sweep_trajectory: grid must be strictly monotone");
    }
  }
  if (folds.n != data.n()) throw InvalidInput("sweep_trajectory: fold plan does not match data");

  TrajectoryResult result;
  result.kind = spec.kind;
  result.grid = grid;
  result.folds = folds;
  const auto width = static_cast<std::size_t>(folds.folds + 1);
  result.cells.assign(grid.size(), std::vector<TrajectoryCell>(width));

  const PairedDataset centred = detail::ensure_centred(data);
  std::vector<PairedDataset> training;
  for (int f = 0; f < folds.folds; ++f) training.push_back(split(data, folds, f).train);

  const std::size_t total = grid.size() * width;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t cell = next++; cell < total; cell = next++) {
      const std::size_t pi = cell / width;
      const std::size_t fi = cell % width;
      const bool is_full = fi + 1 == width;
      EstimatorSpec cell_spec = spec;
      cell_spec.penalty = grid[pi];
      TrajectoryCell& out = result.cells[pi][fi];
      try {
        CcaEstimate est = fit(cell_spec, is_full ? centred : training[fi]);
        if (!is_full) est.provenance.fold = static_cast<int>(fi);
        est.provenance.seed = derive_seed(folds.seed, {static_cast<std::uint64_t>(spec.kind), pi, fi});
        out.estimate = std::move(est);
      } catch (const std::exception& e) {
        out.error = e.what();
      }
    }
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(total)));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  return result;
}

/// n log-spaced values from 10^lo to 10^hi inclusive.
inline std::vector<double> log_grid(double lo_exp, double hi_exp, int points) {
  if (points < 1) throw InvalidInput("log_grid: need at least one point");
  std::vector<double> out;
  for (int i = 0; i < points; ++i) {
    const double t = points == 1 ? 0.0 : static_cast<double>(i) / (points - 1);
    out.push_back(std::pow(10.0, lo_exp + t * (hi_exp - lo_exp)));
  }
  return out;
}

}  // namespace rcca
