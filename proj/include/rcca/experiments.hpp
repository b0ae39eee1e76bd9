#pragma once

// Scaled-down synthetic benchmarks: planted canonical pair error versus n,
// and the parametric-bootstrap panel. Results are long-format rows.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "rcca/estimators.hpp"
#include "rcca/metrics.hpp"
#include "rcca/random.hpp"
#include "rcca/synth.hpp"

namespace rcca {

struct GridSpec {
  EstimatorKind kind = EstimatorKind::Rcca;
  std::vector<double> grid;
};

/// Log-spaced defaults per family; sPLS uses l1 radii from 1 to sqrt(min(p,q)).
inline std::vector<double> default_grid(EstimatorKind kind, Index p, Index q) {
  switch (kind) {
    case EstimatorKind::Rcca: return log_grid(-3.0, 0.0, 7);
    case EstimatorKind::Scca: return log_grid(-3.0, -0.5, 6);
    case EstimatorKind::Gcca: return log_grid(-3.0, -0.5, 6);
    case EstimatorKind::Spls: {
      const double hi = std::max(1.5, std::sqrt(static_cast<double>(std::min(p, q))));
      std::vector<double> g;
      for (int i = 0; i < 6; ++i) g.push_back(1.0 + (hi - 1.0) * i / 5.0);
      return g;
    }
  }
  return {};
}

inline std::vector<GridSpec> default_grids(Index p, Index q) {
  std::vector<GridSpec> out;
  for (EstimatorKind k : {EstimatorKind::Rcca, EstimatorKind::Spls, EstimatorKind::Scca, EstimatorKind::Gcca}) {
    out.push_back({k, default_grid(k, p, q)});
  }
  return out;
}

struct BenchRow {
  std::string experiment;
  std::string algorithm;
  Index n = 0;
  std::uint64_t seed = 0;
  std::string selection;  // "grid", or "<criterion>" for the selected penalty
  double penalty = 0.0;
  std::string metric;
  double value = 0.0;
};

struct BenchResult {
  std::vector<BenchRow> rows;
  std::vector<std::string> warnings;

  std::string to_csv() const {
    std::string out = "experiment,algorithm,n,seed,selection,penalty,metric,value\n";
    for (const auto& r : rows) {
      out += r.experiment + "," + r.algorithm + "," + std::to_string(r.n) + "," + std::to_string(r.seed) + "," +
             r.selection + "," + csv::format_double(r.penalty) + "," + r.metric + "," + csv::format_double(r.value) +
             "\n";
    }
    return out;
  }

  /// Per-seed values of one metric at one selection, in seed order.
  std::vector<double> values(const std::string& algorithm, Index n, const std::string& selection,
                             const std::string& metric) const {
    std::vector<double> out;
    for (const auto& r : rows) {
      if (r.algorithm == algorithm && r.n == n && r.selection == selection && r.metric == metric) {
        out.push_back(r.value);
      }
    }
    return out;
  }
};

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

namespace detail {

struct SweepContext {
  std::string experiment;
  Index n = 0;
  std::uint64_t seed = 0;
  Index k = 1;
  unsigned jobs = 1;
};

/// Sweep one family, add its per-penalty rows and one block of rows for the
/// penalty chosen by each criterion (largest value wins).
inline void run_family(const SweepContext& ctx, const GridSpec& g, const PairedDataset& data, const FoldPlan& plan,
                       const CovarianceModel& cov, const CcaEstimate& truth, const MetricSelection& sel,
                       const std::vector<std::string>& criteria, BenchResult& out) {
  EstimatorSpec spec;
  spec.kind = g.kind;
  spec.k = ctx.k;
  const TrajectoryResult traj = sweep_trajectory(spec, data, g.grid, plan, ctx.jobs);
  const MetricReport report = evaluate_trajectory(traj, data, sel, cov, truth);
  const std::string algo = to_string(g.kind);

  std::vector<std::vector<std::pair<std::string, double>>> per_penalty(g.grid.size());
  auto penalty_index = [&](double pen) {
    return static_cast<std::size_t>(std::find(g.grid.begin(), g.grid.end(), pen) - g.grid.begin());
  };
  for (const auto& r : report.records) {
    if (r.fold != "cv" && r.fold != "full") continue;
    per_penalty[penalty_index(r.penalty)].push_back({r.metric, r.value});
  }
  for (std::size_t pi = 0; pi < g.grid.size(); ++pi) {
    const TrajectoryCell& full = traj.full(pi);
    if (!full.ok()) {
      out.warnings.push_back(algo + "@" + csv::format_double(g.grid[pi]) + ": " + full.error);
      continue;
    }
    const CcaEstimate& est = *full.estimate;
    per_penalty[pi].push_back(
        {"rho-oracle1", oracle_correlations(cov, est.u_dirs.leftCols(1), est.v_dirs.leftCols(1))(0)});
    // Average over fold pairs of the summed oracle errors of the two fold
    // estimates, the natural scale for the matching instability.
    const auto folds = traj.fold_estimates(pi);
    if (folds && folds->size() >= 2) {
      for (Index k : sel.k_list) {
        if (folds->front().k() < k || truth.k() < k) continue;
        double wt = 0.0, vt = 0.0;
        for (const CcaEstimate& f : *folds) {
          const EstimationError e = estimation_error(cov, truth, f, k);
          wt += e.wt_Uk;
          vt += e.vt_Uk;
        }
        const double m = static_cast<double>(folds->size());
        per_penalty[pi].push_back({"wt-U" + std::to_string(k) + "-foldsum", 2.0 * wt / m});
        per_penalty[pi].push_back({"vt-U" + std::to_string(k) + "-foldsum", 2.0 * vt / m});
      }
    }
  }
  for (std::size_t pi = 0; pi < g.grid.size(); ++pi) {
    for (const auto& [metric, value] : per_penalty[pi]) {
      out.rows.push_back({ctx.experiment, algo, ctx.n, ctx.seed, "grid", g.grid[pi], metric, value});
    }
  }
  for (const std::string& criterion : criteria) {
    std::optional<std::size_t> best;
    double best_value = -std::numeric_limits<double>::infinity();
    for (std::size_t pi = 0; pi < g.grid.size(); ++pi) {
      for (const auto& [metric, value] : per_penalty[pi]) {
        if (metric == criterion && std::isfinite(value) && value > best_value) {
          best_value = value;
          best = pi;
        }
      }
    }
    if (!best) {
      out.warnings.push_back(algo + ": no penalty has a finite " + criterion);
      continue;
    }
    for (const auto& [metric, value] : per_penalty[*best]) {
      out.rows.push_back({ctx.experiment, algo, ctx.n, ctx.seed, criterion, g.grid[*best], metric, value});
    }
  }
}

}  // namespace detail

struct CanonicalPairBenchConfig {
  Index p = 30;
  Index q = 30;
  std::vector<double> rhos{0.9};
  Index support = 5;
  WithinView within_view = WithinView::SuoSp;
  std::vector<Index> n_list{100, 400};
  int seeds = 10;
  int folds = 0;  // 0: oracle selection only
  std::uint64_t seed = 0;
  std::vector<GridSpec> grids;  // empty: default_grids
  unsigned jobs = 1;
};

/// Planted-pair model fixed by the base seed; for every n and replicate a
/// fresh Gaussian sample is swept by each family. Penalties are chosen by the
/// oracle first-pair correlation and, with folds, by r2s1-cv.
inline BenchResult canonical_pair_bench(const CanonicalPairBenchConfig& cfg) {
  if (cfg.seeds < 1) throw InvalidInput("canonical_pair_bench: seeds must be positive");
  const Vector rhos = Eigen::Map<const Vector>(cfg.rhos.data(), static_cast<Index>(cfg.rhos.size()));
  const PlantedModel model =
      canonical_pair_covariance(cfg.p, cfg.q, rhos, cfg.support, cfg.within_view, derive_seed(cfg.seed, {0}));
  const std::vector<GridSpec> grids = cfg.grids.empty() ? default_grids(cfg.p, cfg.q) : cfg.grids;
  const Index k = rhos.size();
  MetricSelection sel;
  sel.k_list = {k};
  if (k != 1) sel.k_list.insert(sel.k_list.begin(), 1);
  sel.instability = cfg.folds > 0;
  std::vector<std::string> criteria{"rho-oracle1"};
  if (cfg.folds > 0) criteria.push_back("r2s1-cv");

  BenchResult out;
  for (Index n : cfg.n_list) {
    for (int s = 0; s < cfg.seeds; ++s) {
      const auto rep = static_cast<std::uint64_t>(s);
      const PairedDataset data =
          center(mvn_sample(model.cov, n, derive_seed(cfg.seed, {1, static_cast<std::uint64_t>(n), rep})));
      FoldPlan plan{n, 0, 0, std::vector<int>(static_cast<std::size_t>(n), 0)};
      if (cfg.folds > 0) plan = make_folds(n, cfg.folds, derive_seed(cfg.seed, {2, static_cast<std::uint64_t>(n), rep}));
      const detail::SweepContext ctx{"canonical_pair", n, rep, k, cfg.jobs};
      for (const GridSpec& g : grids) detail::run_family(ctx, g, data, plan, model.cov, model.truth, sel, criteria, out);
    }
  }
  return out;
}

struct BootstrapPanelConfig {
  Index p = 60;
  Index q = 30;
  // Seed data stand in for a real dataset: a planted model sampled once.
  std::vector<double> seed_rhos{0.9, 0.7, 0.5};
  Index seed_support = 5;
  Index seed_n = 300;
  double glasso_lambda = 0.02;
  Index n = 500;
  int seeds = 10;
  int folds = 5;
  std::vector<Index> k_list{1, 3};
  std::vector<std::string> criteria{"r2s1-cv", "R2s3-cv"};
  std::uint64_t seed = 0;
  std::vector<GridSpec> grids;
  unsigned jobs = 1;
};

/// Bootstrap covariance from GLasso-regularising the seed data, then for each
/// replicate a sample of size n, a CV sweep of each family, and oracle metrics
/// against the bootstrap covariance.
inline BenchResult bootstrap_panel_bench(const BootstrapPanelConfig& cfg) {
  if (cfg.seeds < 1) throw InvalidInput("bootstrap_panel_bench: seeds must be positive");
  if (cfg.folds < 2) throw InvalidInput("bootstrap_panel_bench: needs at least two folds");
  const Vector rhos = Eigen::Map<const Vector>(cfg.seed_rhos.data(), static_cast<Index>(cfg.seed_rhos.size()));
  const PlantedModel seed_model =
      canonical_pair_covariance(cfg.p, cfg.q, rhos, cfg.seed_support, WithinView::SuoSp, derive_seed(cfg.seed, {0}));
  const PairedDataset seed_data = center(mvn_sample(seed_model.cov, cfg.seed_n, derive_seed(cfg.seed, {1})));
  BootstrapSpec bspec;
  bspec.mode = BootstrapMode::Glasso;
  bspec.lambda = cfg.glasso_lambda;
  const BootstrapModel boot = bootstrap_covariance(seed_data, bspec);
  const Index kmax = *std::max_element(cfg.k_list.begin(), cfg.k_list.end());
  const CcaEstimate truth = cca_from_covariance(boot.cov, kmax);
  const std::vector<GridSpec> grids = cfg.grids.empty() ? default_grids(cfg.p, cfg.q) : cfg.grids;
  MetricSelection sel;
  sel.k_list = cfg.k_list;

  BenchResult out;
  for (Index j = 0; j < truth.k(); ++j) {
    out.rows.push_back({"bootstrap_panel", "truth", cfg.n, 0, "model", 0.0, "rho" + std::to_string(j + 1), truth.rho(j)});
  }
  for (int s = 0; s < cfg.seeds; ++s) {
    const auto rep = static_cast<std::uint64_t>(s);
    const PairedDataset data = center(mvn_sample(boot.cov, cfg.n, derive_seed(cfg.seed, {2, rep})));
    const FoldPlan plan = make_folds(cfg.n, cfg.folds, derive_seed(cfg.seed, {3, rep}));
    const detail::SweepContext ctx{"bootstrap_panel", cfg.n, rep, kmax, cfg.jobs};
    for (const GridSpec& g : grids) detail::run_family(ctx, g, data, plan, boot.cov, truth, sel, cfg.criteria, out);
  }
  return out;
}

}  // namespace rcca
