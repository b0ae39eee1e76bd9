#pragma once

// Registration of one estimate's variates onto another's, overlap matrices
// between variate blocks, and pairwise subspace distances along a trajectory.

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "rcca/cca_core.hpp"
#include "rcca/csv.hpp"
#include "rcca/datamodel.hpp"
#include "rcca/linalg.hpp"

namespace rcca {

enum class RegistrationMode { Signs, SignedPermutation, Orthogonal, Linear };

inline std::string to_string(RegistrationMode m) {
  switch (m) {
    case RegistrationMode::Signs: return "signs";
    case RegistrationMode::SignedPermutation: return "signed_permutation";
    case RegistrationMode::Orthogonal: return "orthogonal";
    case RegistrationMode::Linear: return "linear";
  }
  return "?";
}

inline RegistrationMode parse_registration_mode(const std::string& s) {
  if (s == "signs") return RegistrationMode::Signs;
  if (s == "signed_permutation") return RegistrationMode::SignedPermutation;
  if (s == "orthogonal") return RegistrationMode::Orthogonal;
  if (s == "linear") return RegistrationMode::Linear;
  throw InvalidInput("unknown registration mode '" + s + "'");
}

/// Minimum-cost assignment of every row to a distinct column of a rows x cols
/// cost matrix (rows <= cols). Returns the column chosen for each row.
inline std::vector<Index> hungarian_assignment(const Matrix& cost) {
  const Index n = cost.rows(), m = cost.cols();
  if (n > m) throw InvalidInput("hungarian_assignment: more rows than columns");
  const double inf = std::numeric_limits<double>::infinity();
  // Potentials-based shortest augmenting path, 1-based with a virtual 0.
  std::vector<double> u(static_cast<std::size_t>(n + 1), 0.0), v(static_cast<std::size_t>(m + 1), 0.0);
  std::vector<Index> match(static_cast<std::size_t>(m + 1), 0), way(static_cast<std::size_t>(m + 1), 0);
  for (Index i = 1; i <= n; ++i) {
    match[0] = i;
    Index j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(m + 1), inf);
    std::vector<bool> used(static_cast<std::size_t>(m + 1), false);
    do {
      used[static_cast<std::size_t>(j0)] = true;
      const Index i0 = match[static_cast<std::size_t>(j0)];
      double delta = inf;
      Index j1 = 0;
      for (Index j = 1; j <= m; ++j) {
        const auto sj = static_cast<std::size_t>(j);
        if (used[sj]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[sj];
        if (cur < minv[sj]) {
          minv[sj] = cur;
          way[sj] = j0;
        }
        if (minv[sj] < delta) {
          delta = minv[sj];
          j1 = j;
        }
      }
      for (Index j = 0; j <= m; ++j) {
        const auto sj = static_cast<std::size_t>(j);
        if (used[sj]) {
          u[static_cast<std::size_t>(match[sj])] += delta;
          v[sj] -= delta;
        } else {
          minv[sj] -= delta;
        }
      }
      j0 = j1;
    } while (match[static_cast<std::size_t>(j0)] != 0);
    do {
      const Index j1 = way[static_cast<std::size_t>(j0)];
      match[static_cast<std::size_t>(j0)] = match[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<Index> out(static_cast<std::size_t>(n), -1);
  for (Index j = 1; j <= m; ++j) {
    if (match[static_cast<std::size_t>(j)] > 0) out[static_cast<std::size_t>(match[static_cast<std::size_t>(j)] - 1)] = j - 1;
  }
  return out;
}

struct Registration {
  RegistrationMode mode = RegistrationMode::Orthogonal;
  Matrix transform;  // K' x K
  double residual = 0.0;  // ||Z1 M - Z0||_F^2
};

/// Least-squares map M from the target variates Z1 (n x K') onto the
/// reference Z0 (n x K) within the mode's matrix class.
inline Registration register_variates(const Matrix& z0, const Matrix& z1, RegistrationMode mode) {
  if (z0.rows() != z1.rows()) throw InvalidInput("register: variate blocks have different row counts");
  const Index k = z0.cols(), kp = z1.cols();
  if (k > kp) throw InvalidInput("register: reference has more columns than target");
  Registration r;
  r.mode = mode;
  const Matrix cross = z1.transpose() * z0;  // K' x K
  switch (mode) {
    case RegistrationMode::Signs: {
      if (k != kp) throw InvalidInput("register: signs mode needs equal column counts");
      r.transform = Matrix::Zero(kp, k);
      for (Index i = 0; i < k; ++i) r.transform(i, i) = cross(i, i) < 0.0 ? -1.0 : 1.0;
      break;
    }
    case RegistrationMode::SignedPermutation: {
      // Cost of sending target column i, with its best sign, onto reference column j.
      Matrix cost(k, kp);
      for (Index j = 0; j < k; ++j)
        for (Index i = 0; i < kp; ++i) cost(j, i) = z1.col(i).squaredNorm() - 2.0 * std::abs(cross(i, j));
      const auto assign = hungarian_assignment(cost);
      r.transform = Matrix::Zero(kp, k);
      for (Index j = 0; j < k; ++j) {
        const Index i = assign[static_cast<std::size_t>(j)];
        r.transform(i, j) = cross(i, j) < 0.0 ? -1.0 : 1.0;
      }
      break;
    }
    case RegistrationMode::Orthogonal: {
      const CompactSvd s = thin_svd(cross);
      r.transform = s.left * s.right.transpose();
      break;
    }
    case RegistrationMode::Linear: {
      Eigen::ColPivHouseholderQR<Matrix> qr(z1);
      qr.setThreshold(1e-10);
      if (qr.rank() < kp) throw InvalidInput("register: target variates are rank deficient (linear mode)");
      const Matrix gram = z1.transpose() * z1;
      r.transform = gram.llt().solve(cross);
      break;
    }
  }
  r.residual = (z1 * r.transform - z0).squaredNorm();
  return r;
}

/// Variates X D recomputed on the given data, each column scaled to unit
/// Euclidean norm (zero columns stay zero).
inline Matrix unit_norm_variates(const Matrix& x_centred, const Matrix& dirs) {
  Matrix z = x_centred * dirs;
  for (Index c = 0; c < z.cols(); ++c) {
    const double nrm = z.col(c).norm();
    if (nrm > 0.0) z.col(c) /= nrm;
  }
  return z;
}

struct OverlapMatrix {
  Matrix values;
  Vector row_sums;
  Vector col_sums;
  bool orthonormal = false;  // both blocks had orthonormal columns (sums read as cos^2)
};

/// Z^T W (or its elementwise square), optionally after orthonormalising both
/// blocks, with row and column sums.
inline OverlapMatrix overlap_matrix(const Matrix& z, const Matrix& w, bool squared, bool orthogonalise_first) {
  if (z.rows() != w.rows()) throw InvalidInput("overlap_matrix: blocks have different row counts");
  const Matrix a = orthogonalise_first ? gram_schmidt(z) : z;
  const Matrix b = orthogonalise_first ? gram_schmidt(w) : w;
  OverlapMatrix out;
  out.values.resize(a.cols(), b.cols());
  for (Index i = 0; i < a.cols(); ++i) {
    for (Index j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (Index r = 0; r < a.rows(); ++r) s += a(r, i) * b(r, j);
      out.values(i, j) = squared ? s * s : s;
    }
  }
  out.row_sums = out.values.rowwise().sum();
  out.col_sums = out.values.colwise().sum().transpose();
  out.orthonormal = orthonormality_deviation(a) <= 1e-8 && orthonormality_deviation(b) <= 1e-8;
  return out;
}

/// CSV with row labels in the first column and column labels as the header;
/// a final row and column hold the sums.
inline std::string overlap_csv_text(const OverlapMatrix& m, const std::vector<std::string>& row_labels,
                                    const std::vector<std::string>& col_labels) {
  std::vector<std::string> header{"label"};
  header.insert(header.end(), col_labels.begin(), col_labels.end());
  header.push_back("row_sum");
  std::string out = csv::join(header) + "\n";
  for (Index i = 0; i < m.values.rows(); ++i) {
    out += row_labels[static_cast<std::size_t>(i)];
    for (Index j = 0; j < m.values.cols(); ++j) out += "," + csv::format_double(m.values(i, j));
    out += "," + csv::format_double(m.row_sums(i)) + "\n";
  }
  out += "col_sum";
  for (Index j = 0; j < m.values.cols(); ++j) out += "," + csv::format_double(m.col_sums(j));
  out += "," + csv::format_double(m.values.sum()) + "\n";
  return out;
}

enum class ComparisonMetric { VariateSubspace, WeightSubspace };

inline ComparisonMetric parse_comparison_metric(const std::string& s) {
  if (s == "vt_Uk" || s == "vt-Uk") return ComparisonMetric::VariateSubspace;
  if (s == "wt_Uk" || s == "wt-Uk") return ComparisonMetric::WeightSubspace;
  throw InvalidInput("unknown comparison metric '" + s + "' (expected vt_Uk or wt_Uk)");
}

/// Symmetric matrix of sin^2 distances between the top-k subspaces of every
/// pair of estimates. Estimates with fewer than k pairs or a zero direction
/// among the first k give NaN (masked) rows and columns.
inline Matrix trajectory_comparison(const std::vector<CcaEstimate>& estimates, const PairedDataset& data,
                                    ComparisonMetric metric, Index k) {
  if (k < 1) throw InvalidInput("trajectory_comparison: k must be positive");
  const Matrix x = data.centred ? data.x : center(data).x;
  const auto m = static_cast<Index>(estimates.size());
  std::vector<Matrix> blocks(estimates.size());
  std::vector<bool> usable(estimates.size(), false);
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    const CcaEstimate& e = estimates[i];
    if (e.u_dirs.cols() < k || e.u_dirs.rows() != data.p()) continue;
    const Matrix top = e.u_dirs.leftCols(k);
    bool zero = false;
    for (Index c = 0; c < k; ++c) zero = zero || top.col(c).isZero(0.0);
    if (zero) continue;
    blocks[i] = metric == ComparisonMetric::VariateSubspace ? unit_norm_variates(x, top) : top;
    usable[i] = orthonormal_basis(blocks[i]).cols() == k;
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  Matrix out = Matrix::Constant(m, m, nan);
  for (Index i = 0; i < m; ++i) {
    if (!usable[static_cast<std::size_t>(i)]) continue;
    out(i, i) = 0.0;
    for (Index j = i + 1; j < m; ++j) {
      if (!usable[static_cast<std::size_t>(j)]) continue;
      const double d = sin2_theta_between(blocks[static_cast<std::size_t>(i)], blocks[static_cast<std::size_t>(j)]);
      out(i, j) = d;
      out(j, i) = d;
    }
  }
  return out;
}

inline std::string matrix_csv_text(const Matrix& m, const std::vector<std::string>& labels) {
  std::vector<std::string> header{"label"};
  header.insert(header.end(), labels.begin(), labels.end());
  std::string out = csv::join(header) + "\n";
  for (Index i = 0; i < m.rows(); ++i) {
    out += labels[static_cast<std::size_t>(i)];
    for (Index j = 0; j < m.cols(); ++j) out += "," + csv::format_double(m(i, j));
    out += "\n";
  }
  return out;
}

/// Short label "<algorithm>@<penalty>[/fold]" for tables and headers.
inline std::string estimate_label(const CcaEstimate& e) {
  std::string s = e.provenance.algorithm + "@" + csv::format_double(e.provenance.penalty);
  if (e.provenance.fold) s += "/f" + std::to_string(*e.provenance.fold);
  return s;
}

}  // namespace rcca
