#pragma once

// Structure-correlation ("biplot") coordinates: every variable of both views
// placed at its correlations with the first K canonical variates of one view.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "rcca/cca_core.hpp"
#include "rcca/csv.hpp"
#include "rcca/datamodel.hpp"
#include "rcca/linalg.hpp"

namespace rcca {

enum class View { X, Y };

inline std::string to_string(View v) { return v == View::X ? "x" : "y"; }

inline View parse_view(const std::string& s) {
  if (s == "x") return View::X;
  if (s == "y") return View::Y;
  throw InvalidInput("unknown view '" + s + "' (expected x or y)");
}

struct BiplotPoint {
  View view = View::X;
  std::string name;
  Vector coords;   // correlations with the K variates; NaN when masked
  double sq_norm = 0.0;
  bool masked = false;
};

struct BiplotCoordinates {
  View variate_view = View::X;
  Index k = 0;
  std::vector<BiplotPoint> points;
  std::vector<std::string> warnings;
};

namespace detail {

inline BiplotPoint make_point(View view, std::string name, Vector coords) {
  BiplotPoint p;
  p.view = view;
  p.name = std::move(name);
  p.masked = !coords.allFinite();
  p.sq_norm = p.masked ? std::numeric_limits<double>::quiet_NaN() : coords.squaredNorm();
  p.coords = std::move(coords);
  return p;
}

inline std::vector<std::string> names_or_default(const std::vector<std::string>& names, const std::string& prefix,
                                                 Index count) {
  return static_cast<Index>(names.size()) == count ? names : PairedDataset::default_names(prefix, count);
}

}  // namespace detail

/// Sample structure correlations on the (full) dataset used for fitting.
inline BiplotCoordinates structure_correlations(const PairedDataset& data, const CcaEstimate& est, View variate_view,
                                                Index k) {
  if (k < 0 || k > est.u_dirs.cols()) throw InvalidInput("structure_correlations: K exceeds the estimate");
  const PairedDataset c = data.centred ? data : center(data);
  const Matrix& dirs = variate_view == View::X ? est.u_dirs : est.v_dirs;
  const Matrix& source = variate_view == View::X ? c.x : c.y;
  if (dirs.rows() != source.cols()) throw InvalidInput("structure_correlations: estimate does not match data");
  const Matrix xi = source * dirs.leftCols(k);
  const double nan = std::numeric_limits<double>::quiet_NaN();

  BiplotCoordinates out;
  out.variate_view = variate_view;
  out.k = k;
  std::vector<bool> dead_variate(static_cast<std::size_t>(k), false);
  for (Index j = 0; j < k; ++j) {
    if (!(xi.col(j).squaredNorm() > 1e-300)) {
      dead_variate[static_cast<std::size_t>(j)] = true;
      out.warnings.push_back("variate " + std::to_string(j + 1) + " has zero sample variance; coordinate masked");
    }
  }
  auto add_view = [&](View view, const Matrix& m, const std::vector<std::string>& names) {
    for (Index i = 0; i < m.cols(); ++i) {
      Vector coords(k);
      const bool dead = !(m.col(i).squaredNorm() > 1e-300);
      if (dead) out.warnings.push_back("variable " + names[static_cast<std::size_t>(i)] + " has zero sample variance; masked");
      for (Index j = 0; j < k; ++j) {
        coords(j) = dead || dead_variate[static_cast<std::size_t>(j)] ? nan : empirical_corr(m.col(i), xi.col(j));
      }
      out.points.push_back(detail::make_point(view, names[static_cast<std::size_t>(i)], std::move(coords)));
    }
  };
  add_view(View::X, c.x, detail::names_or_default(data.x_names, "x", data.p()));
  add_view(View::Y, c.y, detail::names_or_default(data.y_names, "y", data.q()));
  return out;
}

/// Population structure correlations under `cov`.
inline BiplotCoordinates structure_correlations(const CovarianceModel& cov, const CcaEstimate& est, View variate_view,
                                                Index k, const std::vector<std::string>& x_names = {},
                                                const std::vector<std::string>& y_names = {}) {
  if (k < 0 || k > est.u_dirs.cols()) throw InvalidInput("structure_correlations: K exceeds the estimate");
  const bool xv = variate_view == View::X;
  const Matrix dirs = (xv ? est.u_dirs : est.v_dirs).leftCols(k);
  const Matrix& own = xv ? cov.sxx : cov.syy;
  // Covariances of every X and Y variable with the variates.
  const Matrix cov_x = xv ? Matrix(cov.sxx * dirs) : Matrix(cov.sxy * dirs);
  const Matrix cov_y = xv ? Matrix(cov.sxy.transpose() * dirs) : Matrix(cov.syy * dirs);
  const double nan = std::numeric_limits<double>::quiet_NaN();

  BiplotCoordinates out;
  out.variate_view = variate_view;
  out.k = k;
  Vector var_xi(k);
  for (Index j = 0; j < k; ++j) {
    var_xi(j) = dirs.col(j).dot(own * dirs.col(j));
    if (!(var_xi(j) > 0.0)) out.warnings.push_back("variate " + std::to_string(j + 1) + " has zero variance; coordinate masked");
  }
  auto add_view = [&](View view, const Matrix& block, const Matrix& covs, const std::vector<std::string>& names) {
    for (Index i = 0; i < block.rows(); ++i) {
      Vector coords(k);
      const double vi = block(i, i);
      if (!(vi > 0.0)) out.warnings.push_back("variable " + names[static_cast<std::size_t>(i)] + " has zero variance; masked");
      for (Index j = 0; j < k; ++j) {
        coords(j) = vi > 0.0 && var_xi(j) > 0.0 ? covs(i, j) / std::sqrt(vi * var_xi(j)) : nan;
      }
      out.points.push_back(detail::make_point(view, names[static_cast<std::size_t>(i)], std::move(coords)));
    }
  };
  add_view(View::X, cov.sxx, cov_x, detail::names_or_default(x_names, "x", cov.p()));
  add_view(View::Y, cov.syy, cov_y, detail::names_or_default(y_names, "y", cov.q()));
  return out;
}

/// Largest excess over each biplot bound (<= 0 means the bound holds).
struct BiplotBoundReport {
  double norm_excess = 0.0;    // max ||phi||^2 - 1
  double within_x = 0.0;       // max |Corr - <phi, phi'>| - sqrt((1 - |phi|^2)(1 - |phi'|^2)) over X pairs
  double within_y = 0.0;
  double between = 0.0;        // same over (X_i, Y_j) pairs with the extra factor rho_{K+1}
  bool vacuous = false;        // K = 0: nothing checked

  double worst() const { return std::max({norm_excess, within_x, within_y, between}); }
};

/// Check the biplot bounds for the exact population decomposition `est` of
/// `cov` truncated to K pairs (X-view variates).
inline BiplotBoundReport verify_biplot_bounds(const CovarianceModel& cov, const CcaEstimate& est, Index k) {
  BiplotBoundReport r;
  if (k == 0) {
    r.vacuous = true;
    return r;
  }
  const BiplotCoordinates bc = structure_correlations(cov, est, View::X, k);
  const Vector all_rho = cca_from_covariance(cov, std::min(cov.p(), cov.q())).rho;
  const double rho_next = k < all_rho.size() ? all_rho(k) : 0.0;
  const Matrix joint = cov.joint();
  const Index d = joint.rows();
  auto corr = [&](Index a, Index b) { return joint(a, b) / std::sqrt(joint(a, a) * joint(b, b)); };
  auto slack = [&](Index a) { return std::sqrt(std::max(0.0, 1.0 - bc.points[static_cast<std::size_t>(a)].sq_norm)); };
  r.norm_excess = -std::numeric_limits<double>::infinity();
  r.within_x = r.within_y = r.between = -std::numeric_limits<double>::infinity();
  for (Index a = 0; a < d; ++a) {
    r.norm_excess = std::max(r.norm_excess, bc.points[static_cast<std::size_t>(a)].sq_norm - 1.0);
    for (Index b = 0; b < d; ++b) {
      const double approx = bc.points[static_cast<std::size_t>(a)].coords.dot(bc.points[static_cast<std::size_t>(b)].coords);
      const double gap = std::abs(corr(a, b) - approx);
      const bool ax = a < cov.p(), bx = b < cov.p();
      if (ax && bx) r.within_x = std::max(r.within_x, gap - slack(a) * slack(b));
      else if (!ax && !bx) r.within_y = std::max(r.within_y, gap - slack(a) * slack(b));
      else r.between = std::max(r.between, gap - rho_next * slack(a) * slack(b));
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// CSV: view,name,coord_1..coord_K,sq_norm

inline std::string biplot_csv_text(const BiplotCoordinates& bc, double threshold) {
  std::vector<std::string> header{"view", "name"};
  for (Index j = 0; j < bc.k; ++j) header.push_back("coord_" + std::to_string(j + 1));
  header.push_back("sq_norm");
  std::vector<const BiplotPoint*> rows;
  for (const auto& p : bc.points) {
    if (p.masked ? threshold <= 0.0 : p.sq_norm >= threshold) rows.push_back(&p);
  }
  std::stable_sort(rows.begin(), rows.end(), [](const BiplotPoint* a, const BiplotPoint* b) {
    if (a->view != b->view) return a->view == View::X;
    return a->name < b->name;
  });
  std::string out = csv::join(header) + "\n";
  for (const BiplotPoint* p : rows) {
    out += to_string(p->view) + "," + p->name;
    for (Index j = 0; j < bc.k; ++j) out += "," + csv::format_double(p->coords(j));
    out += "," + csv::format_double(p->sq_norm) + "\n";
  }
  return out;
}

inline void export_biplot(const BiplotCoordinates& bc, double threshold, const std::string& path) {
  csv::write_text(path, biplot_csv_text(bc, threshold));
}

inline BiplotCoordinates read_biplot(const std::string& path) {
  const csv::Table t = csv::read_table(path);
  if (t.header.size() < 3 || t.header[0] != "view" || t.header[1] != "name" || t.header.back() != "sq_norm") {
    throw InvalidInput(path + ": not a biplot file");
  }
  BiplotCoordinates bc;
  bc.k = static_cast<Index>(t.header.size()) - 3;
  auto number = [&](const std::string& field) {
    if (field == "nan") return std::numeric_limits<double>::quiet_NaN();
    double v = 0.0;
    if (!csv::parse_double(field, v)) throw InvalidInput(path + ": non-numeric field '" + field + "'");
    return v;
  };
  for (const auto& row : t.rows) {
    if (row.size() != t.header.size()) throw InvalidInput(path + ": ragged row");
    Vector coords(bc.k);
    for (Index j = 0; j < bc.k; ++j) coords(j) = number(row[static_cast<std::size_t>(j + 2)]);
    BiplotPoint p = detail::make_point(parse_view(row[0]), row[1], std::move(coords));
    p.sq_norm = number(row.back());
    bc.points.push_back(std::move(p));
  }
  return bc;
}

}  // namespace rcca
