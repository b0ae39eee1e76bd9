#pragma once

// Correlation-captured and estimation-accuracy criteria, in oracle form
// (against a known covariance) and in cross-validated form (validation folds),
// plus Gaussian mutual information.
//
// Metric identifiers:
//   r2s<k>, R2s<k>       successive / subspace sum of squared correlations
//   r1s<k>, R1s<k>       same with the plain sum
//   mi<k>,  MI<k>        same with Gaussian mutual information
//   <any>-cv             validation-fold average of the above
//   wt-u<k>, vt-u<k>     sin^2 error of direction k in weight / variate space
//   wt-U<k>, vt-U<k>     sin^2 error of the top-k subspace
//   <any of these>-cv    average sin^2 between pairs of fold estimates

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rcca/cca_core.hpp"
#include "rcca/csv.hpp"
#include "rcca/datamodel.hpp"
#include "rcca/estimators.hpp"
#include "rcca/linalg.hpp"

namespace rcca {

enum class AggregationKind { L1Sum, SqSum, MutualInfo };

inline std::string to_string(AggregationKind a) {
  switch (a) {
    case AggregationKind::L1Sum: return "l1_sum";
    case AggregationKind::SqSum: return "sq_sum";
    case AggregationKind::MutualInfo: return "mutual_info";
  }
  return "?";
}

inline AggregationKind parse_aggregation(const std::string& s) {
  if (s == "l1_sum") return AggregationKind::L1Sum;
  if (s == "sq_sum") return AggregationKind::SqSum;
  if (s == "mutual_info") return AggregationKind::MutualInfo;
  throw InvalidInput("unknown aggregation '" + s + "' (expected l1_sum, sq_sum or mutual_info)");
}

/// Largest |rho| fed to the mutual-information aggregation.
inline constexpr double kMutualInfoClamp = 1.0 - 1e-9;

/// Scalar summary of a correlation vector. The sum keeps signs, so a
/// sign-unstable validation correlation pulls the value down.
inline double aggregate(AggregationKind kind, const Vector& rho) {
  switch (kind) {
    case AggregationKind::L1Sum: return rho.sum();
    case AggregationKind::SqSum: return rho.squaredNorm();
    case AggregationKind::MutualInfo: {
      double total = 0.0;
      for (Index k = 0; k < rho.size(); ++k) {
        const double r = std::min(std::abs(rho(k)), kMutualInfoClamp);
        total += -0.5 * std::log1p(-r * r);
      }
      return total;
    }
  }
  return std::numeric_limits<double>::quiet_NaN();
}

/// -1/2 sum log(1 - rho_k^2), with |rho_k| clamped below one.
inline double mutual_information(const Vector& rho) { return aggregate(AggregationKind::MutualInfo, rho); }

/// 1/2 log(|Sxx| |Syy| / |S|) for a positive definite joint covariance.
inline double gauss_mutual_info(const CovarianceModel& cov) {
  auto logdet = [](const Matrix& m) {
    Eigen::LLT<Matrix> llt(m);
    if (llt.info() != Eigen::Success) throw InvalidInput("gauss_mutual_info: covariance is not positive definite");
    return 2.0 * Matrix(llt.matrixL()).diagonal().array().log().sum();
  };
  return 0.5 * (logdet(cov.sxx) + logdet(cov.syy) - logdet(cov.joint()));
}

// ---------------------------------------------------------------------------
// Oracle correlation metrics

/// Population correlation of the variates u^T X and v^T Y under `cov`.
inline double oracle_corr(const CovarianceModel& cov, const Vector& u, const Vector& v) {
  const double uu = u.dot(cov.sxx * u);
  const double vv = v.dot(cov.syy * v);
  if (!(uu > 0.0) || !(vv > 0.0)) throw InvalidInput("oracle_corr: projection has zero variance");
  return u.dot(cov.sxy * v) / std::sqrt(uu * vv);
}

/// Per-pair oracle correlations; a pair with an all-zero direction scores 0.
inline Vector oracle_correlations(const CovarianceModel& cov, const Matrix& u, const Matrix& v) {
  if (u.cols() != v.cols()) throw InvalidInput("oracle_correlations: U and V have different column counts");
  Vector rho(u.cols());
  for (Index k = 0; k < u.cols(); ++k) {
    rho(k) = (u.col(k).isZero(0.0) || v.col(k).isZero(0.0)) ? 0.0 : oracle_corr(cov, u.col(k), v.col(k));
  }
  return rho;
}

inline double succ_cc_agg(AggregationKind f, const CovarianceModel& cov, const Matrix& u, const Matrix& v) {
  if (u.cols() != v.cols()) throw InvalidInput("succ_cc_agg: U and V have different column counts");
  Vector rho(u.cols());
  for (Index k = 0; k < u.cols(); ++k) rho(k) = oracle_corr(cov, u.col(k), v.col(k));
  return aggregate(f, rho);
}

/// Canonical correlations between the projected views U_K^T X and V_K^T Y.
struct SubspaceCorrelations {
  Vector rho;           // length K, zero padded past the effective dimension
  Index dim_x = 0;      // effective rank of U_K under Sxx
  Index dim_y = 0;
};

inline SubspaceCorrelations subspace_correlations(const CovarianceModel& cov, const Matrix& u, const Matrix& v,
                                                  Index k) {
  if (k < 1 || k > u.cols() || k > v.cols()) throw InvalidInput("subspace correlations: K exceeds estimate");
  const Matrix bx = orthonormal_basis(u.leftCols(k), cov.sxx);
  const Matrix by = orthonormal_basis(v.leftCols(k), cov.syy);
  SubspaceCorrelations out;
  out.rho = Vector::Zero(k);
  out.dim_x = bx.cols();
  out.dim_y = by.cols();
  if (bx.cols() == 0 || by.cols() == 0) return out;
  CovarianceModel proj;
  proj.sxx = bx.transpose() * cov.sxx * bx;
  proj.syy = by.transpose() * cov.syy * by;
  proj.sxy = bx.transpose() * cov.sxy * by;
  proj.sxx = (0.5 * (proj.sxx + proj.sxx.transpose())).eval();
  proj.syy = (0.5 * (proj.syy + proj.syy.transpose())).eval();
  const Index m = std::min(bx.cols(), by.cols());
  out.rho.head(m) = cca_from_covariance(proj, m).rho;
  return out;
}

inline double subsp_cc_agg(AggregationKind f, const CovarianceModel& cov, const Matrix& u, const Matrix& v, Index k) {
  return aggregate(f, subspace_correlations(cov, u, v, k).rho);
}

// ---------------------------------------------------------------------------
// Cross-validated correlation metrics

enum class CvMode { Successive, Subspace };

struct CvAggregate {
  double mean = 0.0;
  double sd = 0.0;  // across folds
  std::vector<double> per_fold;
};

namespace detail {

inline void check_fold_estimates(const std::vector<CcaEstimate>& est, const FoldPlan& folds, Index k,
                                 const char* who) {
  if (static_cast<int>(est.size()) != folds.folds) {
    std::ostringstream msg;
    msg << who << ": " << est.size() << " fold estimates for " << folds.folds << " folds";
    throw InvalidInput(msg.str());
  }
  for (const auto& e : est) {
    if (e.u_dirs.cols() < k || e.v_dirs.cols() < k) throw InvalidInput(std::string(who) + ": estimate has fewer than K pairs");
  }
}

inline CvAggregate summarise(std::vector<double> values) {
  CvAggregate out;
  out.per_fold = std::move(values);
  const double n = static_cast<double>(out.per_fold.size());
  for (double v : out.per_fold) out.mean += v / n;
  double ss = 0.0;
  for (double v : out.per_fold) ss += (v - out.mean) * (v - out.mean);
  out.sd = out.per_fold.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  return out;
}

}  // namespace detail

/// Validation-fold correlations for one fold estimate: per pair (successive)
/// or canonical correlations of the K-dimensional variate blocks (subspace).
inline Vector validation_correlations(CvMode mode, const PairedDataset& validation, const CcaEstimate& est, Index k) {
  const Matrix z = validation.x * est.u_dirs.leftCols(k);
  const Matrix w = validation.y * est.v_dirs.leftCols(k);
  if (mode == CvMode::Successive) {
    Vector rho(k);
    for (Index i = 0; i < k; ++i) rho(i) = empirical_corr(z.col(i), w.col(i));
    return rho;
  }
  bool zero_column = false;
  for (Index i = 0; i < k; ++i) {
    zero_column = zero_column || !(z.col(i).squaredNorm() > 0.0) || !(w.col(i).squaredNorm() > 0.0);
  }
  return zero_column ? block_canonical_correlations(z, w) : empirical_canonical_correlations(z, w);
}

inline CvAggregate cv_cc_agg_detail(CvMode mode, AggregationKind f, const PairedDataset& data,
                                    const std::vector<CcaEstimate>& fold_estimates, const FoldPlan& folds, Index k) {
  detail::check_fold_estimates(fold_estimates, folds, k, "cv_cc_agg");
  std::vector<double> values;
  for (int nu = 0; nu < folds.folds; ++nu) {
    const FoldSplit s = split(data, folds, nu);
    values.push_back(aggregate(f, validation_correlations(mode, s.validation, fold_estimates[static_cast<std::size_t>(nu)], k)));
  }
  return detail::summarise(std::move(values));
}

inline double cv_cc_agg(CvMode mode, AggregationKind f, const PairedDataset& data,
                        const std::vector<CcaEstimate>& fold_estimates, const FoldPlan& folds, Index k) {
  return cv_cc_agg_detail(mode, f, data, fold_estimates, folds, k).mean;
}

// ---------------------------------------------------------------------------
// Estimation accuracy and stability

struct EstimationError {
  double wt_uk = 0.0;  // sin^2 between u_k and its estimate
  double vt_uk = 0.0;  // same after mapping through Sxx^{1/2}
  double wt_Uk = 0.0;  // top-k subspace versions
  double vt_Uk = 0.0;
};

namespace detail {

inline double pair_sin2(const Vector& a, const Vector& b) {
  const double aa = a.squaredNorm(), bb = b.squaredNorm();
  if (!(aa > 0.0) || !(bb > 0.0)) return 1.0;
  const double ab = a.dot(b);
  return std::clamp(1.0 - ab * ab / (aa * bb), 0.0, 1.0);
}

}  // namespace detail

inline EstimationError estimation_error(const CovarianceModel& cov, const CcaEstimate& truth, const CcaEstimate& est,
                                        Index k) {
  if (k < 1 || k > truth.u_dirs.cols() || k > est.u_dirs.cols()) {
    throw InvalidInput("estimation_error: k exceeds the number of pairs");
  }
  const Matrix root = sym_matrix_power(cov.sxx, MatrixPower::Sqrt);
  const Index c = k - 1;
  EstimationError e;
  e.wt_uk = detail::pair_sin2(truth.u_dirs.col(c), est.u_dirs.col(c));
  e.vt_uk = detail::pair_sin2(root * truth.u_dirs.col(c), root * est.u_dirs.col(c));
  e.wt_Uk = sin2_theta_between(truth.u_dirs.leftCols(k), est.u_dirs.leftCols(k));
  e.vt_Uk = sin2_theta_between(root * truth.u_dirs.leftCols(k), root * est.u_dirs.leftCols(k));
  return e;
}

/// Average sin^2 between every unordered pair of fold estimates. Variate
/// versions map every fold's directions through the full centred data X.
inline EstimationError cv_instability(const PairedDataset& data, const std::vector<CcaEstimate>& fold_estimates,
                                      Index k) {
  if (fold_estimates.size() < 2) throw InvalidInput("cv_instability: need at least two fold estimates");
  for (const auto& e : fold_estimates) {
    if (k < 1 || k > e.u_dirs.cols()) throw InvalidInput("cv_instability: k exceeds the number of pairs");
  }
  const Matrix x = data.centred ? data.x : center(data).x;
  const Index c = k - 1;
  EstimationError sum;
  int pairs = 0;
  for (std::size_t a = 0; a < fold_estimates.size(); ++a) {
    for (std::size_t b = a + 1; b < fold_estimates.size(); ++b) {
      const Matrix& ua = fold_estimates[a].u_dirs;
      const Matrix& ub = fold_estimates[b].u_dirs;
      sum.wt_uk += detail::pair_sin2(ua.col(c), ub.col(c));
      sum.vt_uk += detail::pair_sin2(x * ua.col(c), x * ub.col(c));
      sum.wt_Uk += sin2_theta_between(ua.leftCols(k), ub.leftCols(k));
      sum.vt_Uk += sin2_theta_between(x * ua.leftCols(k), x * ub.leftCols(k));
      ++pairs;
    }
  }
  sum.wt_uk /= pairs;
  sum.vt_uk /= pairs;
  sum.wt_Uk /= pairs;
  sum.vt_Uk /= pairs;
  return sum;
}

// ---------------------------------------------------------------------------
// Reports

inline std::string correlation_metric_name(AggregationKind f, CvMode mode, Index k, bool cv) {
  std::string stem;
  switch (f) {
    case AggregationKind::SqSum: stem = mode == CvMode::Successive ? "r2s" : "R2s"; break;
    case AggregationKind::L1Sum: stem = mode == CvMode::Successive ? "r1s" : "R1s"; break;
    case AggregationKind::MutualInfo: stem = mode == CvMode::Successive ? "mi" : "MI"; break;
  }
  return stem + std::to_string(k) + (cv ? "-cv" : "");
}

struct MetricRecord {
  std::string algorithm;
  double penalty = 0.0;
  std::string fold;  // "full", "cv", or a fold index
  std::string metric;
  Index k = 0;
  double value = 0.0;
  double dispersion = std::numeric_limits<double>::quiet_NaN();  // sd across folds for cv averages
};

struct MetricReport {
  std::vector<MetricRecord> records;

  void add(MetricRecord r) { records.push_back(std::move(r)); }

  /// Value of the first record matching (algorithm, penalty, metric, fold).
  std::optional<double> find(const std::string& algorithm, double penalty, const std::string& metric,
                             const std::string& fold = "cv") const {
    for (const auto& r : records) {
      if (r.algorithm == algorithm && r.penalty == penalty && r.metric == metric && r.fold == fold) return r.value;
    }
    return std::nullopt;
  }

  std::string to_csv() const {
    std::string out = "algorithm,penalty,fold,metric,k,value\n";
    for (const auto& r : records) {
      out += r.algorithm + "," + csv::format_double(r.penalty) + "," + r.fold + "," + r.metric + "," +
             std::to_string(r.k) + "," + csv::format_double(r.value) + "\n";
    }
    return out;
  }
};

struct MetricSelection {
  std::vector<Index> k_list{1, 3, 5};
  std::vector<AggregationKind> aggregations{AggregationKind::SqSum};
  bool instability = true;
};

/// CV correlation criteria and fold instabilities for every grid penalty of a
/// sweep, plus oracle criteria when the generating covariance is known.
/// Cells that failed or lack k pairs are skipped.
inline MetricReport evaluate_trajectory(const TrajectoryResult& traj, const PairedDataset& data,
                                        const MetricSelection& sel,
                                        const std::optional<CovarianceModel>& truth_cov = std::nullopt,
                                        const std::optional<CcaEstimate>& truth = std::nullopt) {
  MetricReport report;
  const std::string algo = to_string(traj.kind);
  for (std::size_t pi = 0; pi < traj.grid.size(); ++pi) {
    const double penalty = traj.grid[pi];
    const auto folds = traj.fold_estimates(pi);
    const TrajectoryCell& full = traj.full(pi);
    for (Index k : sel.k_list) {
      if (folds && !folds->empty() && folds->front().k() >= k) {
        for (AggregationKind f : sel.aggregations) {
          for (CvMode mode : {CvMode::Successive, CvMode::Subspace}) {
            const CvAggregate cv = cv_cc_agg_detail(mode, f, data, *folds, traj.folds, k);
            const std::string name = correlation_metric_name(f, mode, k, true);
            report.add({algo, penalty, "cv", name, k, cv.mean, cv.sd});
            for (std::size_t nu = 0; nu < cv.per_fold.size(); ++nu) {
              report.add({algo, penalty, std::to_string(nu), name, k, cv.per_fold[nu]});
            }
          }
        }
        if (sel.instability) {
          const EstimationError inst = cv_instability(data, *folds, k);
          report.add({algo, penalty, "cv", "wt-u" + std::to_string(k) + "-cv", k, inst.wt_uk});
          report.add({algo, penalty, "cv", "vt-u" + std::to_string(k) + "-cv", k, inst.vt_uk});
          report.add({algo, penalty, "cv", "wt-U" + std::to_string(k) + "-cv", k, inst.wt_Uk});
          report.add({algo, penalty, "cv", "vt-U" + std::to_string(k) + "-cv", k, inst.vt_Uk});
        }
      }
      if (truth_cov && full.ok() && full.estimate->k() >= k) {
        const CcaEstimate& est = *full.estimate;
        for (AggregationKind f : sel.aggregations) {
          const Vector succ = oracle_correlations(*truth_cov, est.u_dirs.leftCols(k), est.v_dirs.leftCols(k));
          report.add({algo, penalty, "full", correlation_metric_name(f, CvMode::Successive, k, false), k,
                      aggregate(f, succ)});
          report.add({algo, penalty, "full", correlation_metric_name(f, CvMode::Subspace, k, false), k,
                      subsp_cc_agg(f, *truth_cov, est.u_dirs, est.v_dirs, k)});
        }
        if (truth && truth->k() >= k) {
          const EstimationError err = estimation_error(*truth_cov, *truth, est, k);
          report.add({algo, penalty, "full", "wt-u" + std::to_string(k), k, err.wt_uk});
          report.add({algo, penalty, "full", "vt-u" + std::to_string(k), k, err.vt_uk});
          report.add({algo, penalty, "full", "wt-U" + std::to_string(k), k, err.wt_Uk});
          report.add({algo, penalty, "full", "vt-U" + std::to_string(k), k, err.vt_Uk});
        }
      }
    }
  }
  return report;
}

}  // namespace rcca
