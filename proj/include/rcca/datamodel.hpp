#pragma once

// Two-view datasets, partitioned covariance models, centring and
// cross-validation fold plans.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "rcca/csv.hpp"
#include "rcca/linalg.hpp"
#include "rcca/random.hpp"

namespace rcca {

/// Two sample matrices sharing the row (sample) axis.
struct PairedDataset {
  Matrix x;
  Matrix y;
  std::vector<std::string> x_names;
  std::vector<std::string> y_names;
  bool centred = false;
  Vector x_means;  // recorded when centred
  Vector y_means;

  Index n() const { return x.rows(); }
  Index p() const { return x.cols(); }
  Index q() const { return y.cols(); }

  /// Builds a dataset, generating names x1.., y1.. when none are given.
  static PairedDataset make(Matrix x, Matrix y, std::vector<std::string> x_names = {},
                            std::vector<std::string> y_names = {}) {
    PairedDataset d;
    d.x = std::move(x);
    d.y = std::move(y);
    d.x_names = x_names.empty() ? default_names("x", d.x.cols()) : std::move(x_names);
    d.y_names = y_names.empty() ? default_names("y", d.y.cols()) : std::move(y_names);
    d.validate();
    return d;
  }

  static std::vector<std::string> default_names(const std::string& prefix, Index count) {
    std::vector<std::string> names;
    names.reserve(static_cast<std::size_t>(count));
    for (Index i = 0; i < count; ++i) names.push_back(prefix + std::to_string(i + 1));
    return names;
  }

  void validate() const {
    if (x.rows() != y.rows()) {
      std::ostringstream msg;
      msg << "PairedDataset: views have different row counts (" << x.rows() << " vs " << y.rows() << ")";
      throw InvalidInput(msg.str());
    }
    if (static_cast<Index>(x_names.size()) != x.cols() || static_cast<Index>(y_names.size()) != y.cols()) {
      throw InvalidInput("PairedDataset: name lists do not match column counts");
    }
    detail::require_finite(x, "PairedDataset.x");
    detail::require_finite(y, "PairedDataset.y");
  }
};

/// Joint covariance partitioned into within-view and between-view blocks.
struct CovarianceModel {
  Matrix sxx;
  Matrix sxy;
  Matrix syy;

  Index p() const { return sxx.rows(); }
  Index q() const { return syy.rows(); }

  Matrix joint() const {
    Matrix j(p() + q(), p() + q());
    j << sxx, sxy, sxy.transpose(), syy;
    return j;
  }

  static CovarianceModel from_joint(const Matrix& joint, Index p) {
    if (joint.rows() != joint.cols() || p < 0 || p > joint.rows()) {
      throw InvalidInput("CovarianceModel::from_joint: bad partition");
    }
    const Index q = joint.rows() - p;
    CovarianceModel c;
    c.sxx = joint.topLeftCorner(p, p);
    c.sxy = joint.topRightCorner(p, q);
    c.syy = joint.bottomRightCorner(q, q);
    return c;
  }

  /// Throws unless the joint matrix is symmetric and the within-view blocks
  /// are PSD (both to the stated tolerances).
  void validate(double sym_tol = 1e-10, double psd_tol = 1e-10) const {
    if (sxx.rows() != sxx.cols() || syy.rows() != syy.cols() || sxy.rows() != sxx.rows() ||
        sxy.cols() != syy.rows()) {
      throw InvalidInput("CovarianceModel: block dimensions are inconsistent");
    }
    detail::require_finite(joint(), "CovarianceModel");
    detail::require_symmetric(sxx, sym_tol, "CovarianceModel.sxx");
    detail::require_symmetric(syy, sym_tol, "CovarianceModel.syy");
    for (const Matrix* block : {&sxx, &syy}) {
      if (block->rows() == 0) continue;
      const double min_eig = symmetric_eigen(*block).eigenvalues.minCoeff();
      if (min_eig < -psd_tol * std::max(1.0, detail::max_abs(*block))) {
        throw InvalidInput("CovarianceModel: within-view block is not PSD");
      }
    }
  }
};

/// Column-centre both views, recording the means.
inline PairedDataset center(const PairedDataset& data) {
  PairedDataset out = data;
  out.x_means = data.x.colwise().mean().transpose();
  out.y_means = data.y.colwise().mean().transpose();
  out.x.rowwise() -= out.x_means.transpose();
  out.y.rowwise() -= out.y_means.transpose();
  out.centred = true;
  return out;
}

/// Covariance blocks (1/n) X^T X etc. of already-centred data.
inline CovarianceModel covariance_of_centred(const PairedDataset& data) {
  const double inv_n = 1.0 / static_cast<double>(data.n());
  CovarianceModel c;
  c.sxx = inv_n * data.x.transpose() * data.x;
  c.sxy = inv_n * data.x.transpose() * data.y;
  c.syy = inv_n * data.y.transpose() * data.y;
  c.sxx = (0.5 * (c.sxx + c.sxx.transpose())).eval();
  c.syy = (0.5 * (c.syy + c.syy.transpose())).eval();
  return c;
}

inline std::pair<PairedDataset, CovarianceModel> center_and_covariance(const PairedDataset& data) {
  if (data.n() < 2) throw InvalidInput("center_and_covariance: need at least two samples");
  PairedDataset centred = center(data);
  CovarianceModel cov = covariance_of_centred(centred);
  return {std::move(centred), std::move(cov)};
}

/// Assignment of samples to V cross-validation folds.
struct FoldPlan {
  Index n = 0;
  int folds = 0;
  std::uint64_t seed = 0;
  std::vector<int> assignments;

  std::vector<Index> validation_rows(int fold) const {
    std::vector<Index> rows;
    for (Index i = 0; i < n; ++i)
      if (assignments[static_cast<std::size_t>(i)] == fold) rows.push_back(i);
    return rows;
  }

  std::vector<Index> training_rows(int fold) const {
    std::vector<Index> rows;
    for (Index i = 0; i < n; ++i)
      if (assignments[static_cast<std::size_t>(i)] != fold) rows.push_back(i);
    return rows;
  }

  std::vector<Index> fold_sizes() const {
    std::vector<Index> sizes(static_cast<std::size_t>(folds), 0);
    for (int a : assignments) ++sizes[static_cast<std::size_t>(a)];
    return sizes;
  }
};

/// Random balanced assignment of n samples to V folds: a seeded
/// Fisher-Yates shuffle dealt round-robin.
inline FoldPlan make_folds(Index n, int folds, std::uint64_t seed) {
  if (folds < 2) throw InvalidInput("make_folds: need at least two folds");
  if (folds > n) throw InvalidInput("make_folds: more folds than samples");
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  Rng rng(seed);
  for (Index i = n - 1; i > 0; --i) {
    const auto j = static_cast<Index>(rng.below(static_cast<std::uint64_t>(i + 1)));
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }
  FoldPlan plan;
  plan.n = n;
  plan.folds = folds;
  plan.seed = seed;
  plan.assignments.assign(static_cast<std::size_t>(n), 0);
  for (Index pos = 0; pos < n; ++pos) {
    plan.assignments[static_cast<std::size_t>(order[static_cast<std::size_t>(pos)])] =
        static_cast<int>(pos % folds);
  }
  return plan;
}

namespace detail {

inline Matrix take_rows(const Matrix& m, const std::vector<Index>& rows) {
  Matrix out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Index>(r)) = m.row(rows[r]);
  return out;
}

}  // namespace detail

struct FoldSplit {
  PairedDataset train;       // centred with its own means
  PairedDataset validation;  // shifted by the training means
};

/// Train/validation split for one fold. Validation rows are shifted by the
/// training means, never by their own.
inline FoldSplit split(const PairedDataset& data, const FoldPlan& plan, int fold) {
  if (plan.n != data.n()) throw InvalidInput("split: fold plan size does not match data");
  if (fold < 0 || fold >= plan.folds) throw InvalidInput("split: fold index out of range");
  const auto train_rows = plan.training_rows(fold);
  const auto val_rows = plan.validation_rows(fold);
  PairedDataset raw_train = PairedDataset::make(detail::take_rows(data.x, train_rows),
                                                detail::take_rows(data.y, train_rows), data.x_names,
                                                data.y_names);
  FoldSplit out{center(raw_train), PairedDataset{}};
  out.validation = PairedDataset::make(detail::take_rows(data.x, val_rows),
                                       detail::take_rows(data.y, val_rows), data.x_names, data.y_names);
  out.validation.x.rowwise() -= out.train.x_means.transpose();
  out.validation.y.rowwise() -= out.train.y_means.transpose();
  out.validation.x_means = out.train.x_means;
  out.validation.y_means = out.train.y_means;
  out.validation.centred = false;
  return out;
}

// ---------------------------------------------------------------------------
// Two-view CSV files: one per view, header row of variable names, one sample
// per subsequent row. Rows are matched by order.

struct ViewTable {
  std::vector<std::string> names;
  Matrix values;
};

inline ViewTable read_view_csv(const std::string& path) {
  const csv::Table t = csv::read_table(path);
  ViewTable v;
  v.names = t.header;
  const auto cols = static_cast<Index>(v.names.size());
  v.values.resize(static_cast<Index>(t.rows.size()), cols);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    if (static_cast<Index>(row.size()) != cols) {
      std::ostringstream msg;
      msg << path << ": row " << r + 2 << " has " << row.size() << " fields, expected " << cols;
      throw InvalidInput(msg.str());
    }
    for (Index c = 0; c < cols; ++c) {
      double value = 0.0;
      if (!csv::parse_double(row[static_cast<std::size_t>(c)], value)) {
        std::ostringstream msg;
        msg << path << ": missing or non-numeric value at row " << r + 2 << ", column '"
            << v.names[static_cast<std::size_t>(c)] << "'";
        throw InvalidInput(msg.str());
      }
      v.values(static_cast<Index>(r), c) = value;
    }
  }
  return v;
}

inline PairedDataset read_two_view_csv(const std::string& x_path, const std::string& y_path) {
  ViewTable x = read_view_csv(x_path);
  ViewTable y = read_view_csv(y_path);
  if (x.values.rows() != y.values.rows()) {
    std::ostringstream msg;
    msg << "row-count mismatch: '" << x_path << "' has " << x.values.rows() << " samples, '" << y_path
        << "' has " << y.values.rows();
    throw InvalidInput(msg.str());
  }
  return PairedDataset::make(std::move(x.values), std::move(y.values), std::move(x.names),
                             std::move(y.names));
}

inline std::string view_csv_text(const std::vector<std::string>& names, const Matrix& values) {
  std::string out = csv::join(names) + "\n";
  for (Index r = 0; r < values.rows(); ++r) {
    for (Index c = 0; c < values.cols(); ++c) {
      if (c) out += ',';
      out += csv::format_double(values(r, c));
    }
    out += '\n';
  }
  return out;
}

inline void write_two_view_csv(const PairedDataset& data, const std::string& x_path, const std::string& y_path) {
  csv::write_text(x_path, view_csv_text(data.x_names, data.x));
  csv::write_text(y_path, view_csv_text(data.y_names, data.y));
}

}  // namespace rcca
