#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "rcca/estimators.hpp"
#include "support.hpp"

using namespace rcca;
using rcca::testing::gaussian_matrix;
using rcca::testing::gaussian_sample;
using rcca::testing::random_covariance_model;
using rcca::testing::random_pd;

namespace {

PairedDataset toy_data(std::uint64_t seed, Index p, Index q, Index n) {
  Rng rng(seed);
  const CovarianceModel c = random_covariance_model(rng, p, q);
  return center(gaussian_sample(rng, c.joint(), p, n));
}

// Variate angle (radians) between X a and X b on centred data.
double variate_angle(const Matrix& x, const Vector& a, const Vector& b) {
  const double c = std::abs(empirical_corr(x * a, x * b));
  return std::acos(std::min(1.0, c));
}

void expect_unit_variance(const CcaEstimate& est, const PairedDataset& centred, double tol = 1e-6) {
  const double n = static_cast<double>(centred.n());
  for (Index k = 0; k < est.k(); ++k) {
    EXPECT_NEAR((centred.x * est.u_dirs.col(k)).squaredNorm() / n, 1.0, tol) << "u" << k + 1;
    EXPECT_NEAR((centred.y * est.v_dirs.col(k)).squaredNorm() / n, 1.0, tol) << "v" << k + 1;
  }
}

}  // namespace

TEST(Rcca, FullRidgeIsPls) {
  const PairedDataset d = toy_data(1, 5, 4, 60);
  const CcaEstimate est = rcca_fit(d, 1.0, 3);
  const CompactSvd svd = compact_svd(covariance_of_centred(d).sxy);
  for (Index k = 0; k < 3; ++k) {
    EXPECT_NEAR(est.rho(k), svd.singular_values(k), 1e-10);
    EXPECT_LE(variate_angle(d.x, est.u_dirs.col(k), svd.left.col(k)), 1e-6);
    EXPECT_LE(variate_angle(d.y, est.v_dirs.col(k), svd.right.col(k)), 1e-6);
  }
}

TEST(Rcca, NoRidgeIsSampleCca) {
  const PairedDataset d = toy_data(2, 4, 3, 80);
  const CcaEstimate est = rcca_fit(d, 0.0, 3);
  const CcaEstimate ref = sample_cca(d, 3);
  EXPECT_LE((est.rho - ref.rho).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LE((est.u_dirs - ref.u_dirs).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LE((est.v_dirs - ref.v_dirs).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Rcca, PlugInEquivalence) {
  const PairedDataset d = toy_data(3, 3, 3, 40);
  const CovarianceModel c = covariance_of_centred(d);
  CovarianceModel direct;
  direct.sxx = 0.5 * c.sxx + 0.5 * Matrix::Identity(3, 3);
  direct.syy = 0.5 * c.syy + 0.5 * Matrix::Identity(3, 3);
  direct.sxy = c.sxy;
  const CcaEstimate ref = cca_from_covariance(direct, 3);
  const CcaEstimate est = rcca_fit(d, 0.5, 3);
  EXPECT_LE((est.rho - ref.rho).cwiseAbs().maxCoeff(), 1e-12);
  for (Index k = 0; k < 3; ++k) EXPECT_LE(variate_angle(d.x, est.u_dirs.col(k), ref.u_dirs.col(k)), 1e-7);
}

TEST(Rcca, Errors) {
  const PairedDataset d = toy_data(4, 3, 3, 20);
  EXPECT_THROW(rcca_fit(d, 1.5, 1), InvalidInput);
  EXPECT_THROW(rcca_fit(d, -0.1, 1), InvalidInput);
  EXPECT_THROW(rcca_fit(d, 0.5, 4), InvalidInput);
}

TEST(RccaProperty, ContinuityInRidge) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const PairedDataset d = toy_data(100 + seed, 4, 4, 50);
    for (double c : {0.0, 0.2, 0.5, 0.9, 0.999}) {
      const Vector a = rcca_fit(d, c, 4).rho;
      const Vector b = rcca_fit(d, c + 1e-3, 4).rho;
      EXPECT_LE((a - b).cwiseAbs().maxCoeff(), 0.05);
    }
  }
}

TEST(Spls, SlackConstraintGivesTopSingularPair) {
  const PairedDataset d = toy_data(5, 4, 6, 80);
  const CcaEstimate est = spls_fit(d, std::sqrt(6.0), 1);
  const CompactSvd svd = compact_svd(covariance_of_centred(d).sxy);
  EXPECT_NEAR(std::abs(est.u_dirs.col(0).dot(svd.left.col(0))), 1.0, 1e-8);
  EXPECT_NEAR(std::abs(est.v_dirs.col(0).dot(svd.right.col(0))), 1.0, 1e-8);
}

TEST(Spls, AxisAlignedRankOne) {
  // Orthonormal centred columns make Cxy = e1 e1^T exactly.
  Rng rng(6);
  Matrix raw = gaussian_matrix(rng, 30, 6);
  raw.rowwise() -= raw.colwise().mean();
  const Matrix q = orthonormal_basis(raw) * std::sqrt(30.0);
  Matrix x(30, 3), y(30, 4);
  x << q.col(0), q.col(1), q.col(2);
  y << q.col(0), q.col(3), q.col(4), q.col(5);
  const PairedDataset d = PairedDataset::make(x, y);
  for (double s : {1.0, 1.3, 2.0}) {
    const CcaEstimate est = spls_fit(d, s, 1);
    EXPECT_NEAR(std::abs(est.u_dirs(0, 0)), 1.0, 1e-10);
    EXPECT_NEAR(std::abs(est.v_dirs(0, 0)), 1.0, 1e-10);
  }
}

TEST(Spls, RandomFeasiblePointOracle) {
  const PairedDataset d = toy_data(7, 4, 4, 50);
  const Matrix cxy = covariance_of_centred(d).sxy;
  const double s = 1.2;
  const CcaEstimate est = spls_fit(d, s, 1);
  const double ours = est.u_dirs.col(0).dot(cxy * est.v_dirs.col(0));
  EXPECT_LE(est.u_dirs.col(0).lpNorm<1>(), s + 1e-9);
  EXPECT_LE(est.v_dirs.col(0).lpNorm<1>(), s + 1e-9);
  Rng rng(8);
  auto feasible = [&](Vector z) {
    return Vector(z / std::max(z.norm(), z.lpNorm<1>() / s));
  };
  double best = -1.0;
  for (int i = 0; i < 100000; ++i) {
    Vector u = feasible(gaussian_matrix(rng, 4, 1).col(0));
    Vector v = feasible(gaussian_matrix(rng, 4, 1).col(0));
    best = std::max(best, std::abs(u.dot(cxy * v)));
  }
  EXPECT_GE(ours, best - 1e-12);
}

TEST(Spls, UnitNormAndEmpiricalRho) {
  const PairedDataset d = toy_data(9, 6, 5, 70);
  const CcaEstimate est = spls_fit(d, 1.8, 3);
  for (Index k = 0; k < 3; ++k) {
    EXPECT_NEAR(est.u_dirs.col(k).norm(), 1.0, 1e-12);
    EXPECT_NEAR(est.v_dirs.col(k).norm(), 1.0, 1e-12);
    EXPECT_NEAR(est.rho(k), empirical_corr(d.x * est.u_dirs.col(k), d.y * est.v_dirs.col(k)), 1e-12);
  }
  EXPECT_THROW(spls_fit(d, 0.9, 1), InvalidInput);
}

TEST(Scca, ZeroPenaltyMatchesSampleCca) {
  const PairedDataset d = toy_data(10, 4, 3, 200);
  const CcaEstimate ref = sample_cca(d, 1);
  LadmmOptions opt;
  opt.max_outer = 20000;
  const CcaEstimate est = scca_fit(d, 0.0, 1, opt);
  EXPECT_TRUE(est.provenance.converged);
  EXPECT_LE(variate_angle(d.x, est.u_dirs.col(0), ref.u_dirs.col(0)), 1e-4);
  EXPECT_LE(variate_angle(d.y, est.v_dirs.col(0), ref.v_dirs.col(0)), 1e-4);
  expect_unit_variance(est, d);
}

TEST(Scca, OverPenalisedIsDegenerate) {
  const PairedDataset d = toy_data(11, 4, 4, 60);
  const CcaEstimate est = scca_fit(d, 100.0, 1);
  EXPECT_TRUE(est.provenance.degenerate);
  EXPECT_TRUE(est.u_dirs.isZero(0.0));
  EXPECT_TRUE(est.v_dirs.isZero(0.0));
}

TEST(Scca, PolarGridBruteForce) {
  const PairedDataset d = toy_data(12, 2, 2, 50);
  const double tau = 0.05;
  const CovarianceModel c = covariance_of_centred(d);
  LadmmOptions opt;
  opt.max_outer = 20000;
  const CcaEstimate est = scca_fit(d, tau, 1, opt);
  auto objective = [&](const Vector& u, const Vector& v) {
    return -u.dot(c.sxy * v) + tau * (u.lpNorm<1>() + v.lpNorm<1>());
  };
  const double ours = objective(est.u_dirs.col(0), est.v_dirs.col(0));
  EXPECT_LE(est.u_dirs.col(0).dot(c.sxx * est.u_dirs.col(0)), 1.0 + 1e-6);
  double best = 0.0;  // u = v = 0 is feasible
  const int steps = 720;
  std::vector<Vector> dirs_u, dirs_v;
  for (int i = 0; i < steps; ++i) {
    const double t = 2.0 * std::numbers::pi * i / steps;
    Vector a(2);
    a << std::cos(t), std::sin(t);
    dirs_u.push_back(a / std::sqrt(a.dot(c.sxx * a)));
    dirs_v.push_back(a / std::sqrt(a.dot(c.syy * a)));
  }
  for (const Vector& u : dirs_u)
    for (const Vector& v : dirs_v) {
      // Bilinear in the two radii, so the optimum over the feasible box is at a corner.
      for (double ru : {0.0, 1.0})
        for (double rv : {0.0, 1.0}) best = std::min(best, objective(ru * u, rv * v));
    }
  EXPECT_LE(std::abs(ours - best), 1e-3);
}

TEST(Scca, SuccessiveOrthogonality) {
  const PairedDataset d = toy_data(13, 6, 5, 120);
  LadmmOptions opt;
  opt.max_outer = 5000;
  const CcaEstimate est = scca_fit(d, 0.01, 3, opt);
  const CovarianceModel c = covariance_of_centred(d);
  for (Index k = 1; k < 3; ++k)
    for (Index j = 0; j < k; ++j) {
      EXPECT_LE(std::abs(est.u_dirs.col(k).dot(c.sxx * est.u_dirs.col(j))), 1e-5);
      EXPECT_LE(std::abs(est.v_dirs.col(k).dot(c.syy * est.v_dirs.col(j))), 1e-5);
    }
  expect_unit_variance(est, d);
}

TEST(Scca, DualRecyclingUsesFewerInnerSteps) {
  const PairedDataset d = toy_data(14, 4, 4, 100);
  LadmmOptions fast;
  fast.max_outer = 20000;
  LadmmOptions slow = fast;
  slow.n_steps_admm = 1000;
  slow.recycle_duals = false;
  const CcaEstimate a = scca_fit(d, 0.02, 1, fast);
  const CcaEstimate b = scca_fit(d, 0.02, 1, slow);
  ASSERT_TRUE(a.provenance.converged);
  ASSERT_TRUE(b.provenance.converged);
  EXPECT_LE(a.provenance.diagnostics.at("inner_steps"), 0.5 * b.provenance.diagnostics.at("inner_steps"));
  EXPECT_LE(variate_angle(d.x, a.u_dirs.col(0), b.u_dirs.col(0)), 1e-3);
}

TEST(Gcca, VanishingPenaltyMatchesSampleCca) {
  const PairedDataset d = toy_data(15, 3, 3, 400);
  const CcaEstimate ref = sample_cca(d, 2);
  const CcaEstimate est = gcca_fit(d, 1e-8, 2);
  for (Index k = 0; k < 2; ++k) {
    EXPECT_LE(variate_angle(d.x, est.u_dirs.col(k), ref.u_dirs.col(k)), 1e-3);
    EXPECT_LE(variate_angle(d.y, est.v_dirs.col(k), ref.v_dirs.col(k)), 1e-3);
  }
  expect_unit_variance(est, d);
  EXPECT_GT(est.provenance.diagnostics.count("glasso_offdiag_nnz"), 0u);
}

TEST(Gcca, SparsePrecisionRowsExcludeSupport) {
  Rng rng(16);
  const Index p = 5, q = 4;
  for (int trial = 0; trial < 20; ++trial) {
    Matrix omega = random_pd(rng, p + q, 0.5);
    for (Index a : {0, 2}) {
      omega.block(a, p, 1, q).setZero();
      omega.block(p, a, q, 1).setZero();
    }
    omega += (1e-9 - std::min(0.0, symmetric_eigen(omega).eigenvalues.minCoeff())) * Matrix::Identity(p + q, p + q);
    const Matrix sigma = omega.inverse();
    const CcaEstimate est = cca_from_covariance(CovarianceModel::from_joint(0.5 * (sigma + sigma.transpose()), p), 3);
    for (Index k = 0; k < 3; ++k) {
      EXPECT_LE(std::abs(est.u_dirs(0, k)), 1e-8);
      EXPECT_LE(std::abs(est.u_dirs(2, k)), 1e-8);
    }
  }
}

TEST(Gcca, LargePenaltyDegenerate) {
  const PairedDataset d = toy_data(17, 3, 3, 50);
  const CcaEstimate est = gcca_fit(d, 1e3, 2);
  EXPECT_LE(est.rho.maxCoeff(), 1e-12);
  EXPECT_TRUE(est.provenance.degenerate);
}

TEST(Sweep, CountsCells) {
  const PairedDataset d = toy_data(18, 3, 3, 30);
  EstimatorSpec spec;
  spec.kind = EstimatorKind::Rcca;
  spec.k = 2;
  const TrajectoryResult r = sweep_trajectory(spec, d, {0.3}, make_folds(30, 2, 1));
  ASSERT_EQ(r.cells.size(), 1u);
  ASSERT_EQ(r.cells[0].size(), 3u);
  for (const auto& c : r.cells[0]) EXPECT_TRUE(c.ok());
  EXPECT_EQ(r.fold(0, 1).estimate->provenance.fold, 1);
  EXPECT_FALSE(r.full(0).estimate->provenance.fold.has_value());
}

TEST(Sweep, DeterministicAcrossJobCounts) {
  const PairedDataset d = toy_data(19, 4, 3, 60);
  EstimatorSpec spec;
  spec.kind = EstimatorKind::Scca;
  spec.k = 2;
  const std::vector<double> grid = {0.001, 0.01, 0.05};
  const FoldPlan plan = make_folds(60, 3, 42);
  const TrajectoryResult a = sweep_trajectory(spec, d, grid, plan, 1);
  const TrajectoryResult b = sweep_trajectory(spec, d, grid, plan, 1);
  const TrajectoryResult c = sweep_trajectory(spec, d, grid, plan, 3);
  for (std::size_t i = 0; i < grid.size(); ++i)
    for (std::size_t f = 0; f < 4; ++f) {
      const auto& ra = a.cells[i][f].estimate->rho;
      EXPECT_EQ(ra, b.cells[i][f].estimate->rho);
      EXPECT_EQ(ra, c.cells[i][f].estimate->rho);
      EXPECT_EQ(a.cells[i][f].estimate->u_dirs, c.cells[i][f].estimate->u_dirs);
    }
}

TEST(Sweep, FailuresRecordedPerCell) {
  const PairedDataset d = toy_data(20, 4, 4, 40);
  EstimatorSpec spec;
  spec.kind = EstimatorKind::Gcca;
  spec.k = 1;
  spec.glasso.max_iter = 1;
  const TrajectoryResult r = sweep_trajectory(spec, d, {0.01, 100.0}, make_folds(40, 2, 3));
  for (const auto& c : r.cells[0]) {
    EXPECT_FALSE(c.ok());
    EXPECT_NE(c.error.find("no certificate"), std::string::npos);
  }
  for (const auto& c : r.cells[1]) EXPECT_TRUE(c.ok());
}

TEST(Sweep, RejectsBadGrid) {
  const PairedDataset d = toy_data(21, 3, 3, 20);
  EstimatorSpec spec;
  const FoldPlan plan = make_folds(20, 2, 1);
  EXPECT_THROW(sweep_trajectory(spec, d, {}, plan), InvalidInput);
  EXPECT_THROW(sweep_trajectory(spec, d, {0.1, 0.1}, plan), InvalidInput);
  EXPECT_THROW(sweep_trajectory(spec, d, {0.1, 0.3, 0.2}, plan), InvalidInput);
}

TEST(EstimatorContract, UnitVarianceVariates) {
  const PairedDataset d = toy_data(22, 5, 4, 80);
  expect_unit_variance(rcca_fit(d, 0.3, 3), d);
  expect_unit_variance(gcca_fit(d, 0.05, 3), d);
  expect_unit_variance(scca_fit(d, 0.02, 2), d);
}
