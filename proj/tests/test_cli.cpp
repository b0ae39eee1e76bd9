#include <gtest/gtest.h>

#include <cstdlib>
#include <sys/wait.h>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <Eigen/SVD>

#include "rcca/cli.hpp"
#include "support.hpp"

using namespace rcca;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("rcca_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Toy two-view CSV pair in `dir`; returns the raw (uncentred) data.
PairedDataset write_toy(const fs::path& dir, std::uint64_t seed = 1) {
  Rng rng(seed);
  const PairedDataset d = rcca::testing::gaussian_sample(rng, rcca::testing::random_pd(rng, 7), 4, 60);
  write_two_view_csv(d, (dir / "x.csv").string(), (dir / "y.csv").string());
  return read_two_view_csv((dir / "x.csv").string(), (dir / "y.csv").string());
}

std::string write_config(const fs::path& dir, const json& j, const std::string& name = "config.json") {
  const fs::path p = dir / name;
  std::ofstream(p) << j.dump(2);
  return p.string();
}

int run_cli(const std::string& command, const std::string& config, const fs::path& out, unsigned jobs = 1,
            std::optional<std::uint64_t> seed = std::nullopt, std::string* log = nullptr) {
  cli::Options o;
  o.command = command;
  o.config_path = config;
  o.out_dir = out.string();
  o.jobs = jobs;
  o.seed = seed;
  std::ostringstream ss;
  const int code = cli::run(o, ss);
  if (log) *log = ss.str();
  return code;
}

json toy_data() { return {{"x", "x.csv"}, {"y", "y.csv"}}; }

}  // namespace

TEST(Fnv1a, KnownVectors) {
  EXPECT_EQ(cli::fnv1a(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(cli::fnv1a("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(cli::fnv1a("foobar"), 0x85944171f73967e8ULL);
  EXPECT_EQ(cli::hex64(0xaf63dc4c8601ec8cULL), "af63dc4c8601ec8c");
}

TEST(ConfigParse, FieldLevelMessages) {
  auto message = [](const json& j) {
    try {
      cli::parse_config(j, ".");
    } catch (const cli::ConfigError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_EQ(message({{"seeed", 1}}), "seeed: unknown field");
  EXPECT_EQ(message({{"estimators", {{{"kind", "rcca"}, {"penalti", 1}}}}}), "estimators[0].penalti: unknown field");
  EXPECT_EQ(message({{"estimators", {{{"kind", "cca"}}}}}).rfind("estimators[0].kind:", 0), 0u);
  EXPECT_EQ(message({{"folds", {{"V", 1}}}}), "folds.V: must be at least 2");
  EXPECT_EQ(message({{"metrics", {{"k_list", {1, 0}}}}}), "metrics.k_list[1]: expected a positive integer");
  EXPECT_EQ(message({{"generator", {{"name", "canonical_pair"}, {"p", 10}, {"q", 10}}}}),
            "generator.n: required field missing");
  EXPECT_EQ(message({{"grid", {{"log", {0, 1}}}}}), "grid.log: expected [lo_exp, hi_exp, points]");
  EXPECT_EQ(message({{"data", {{"x", "a"}, {"y", "b"}}}, {"generator", {{"name", "powerlaw"}}}}).rfind("data:", 0), 0u);
  EXPECT_EQ(message({{"seed", -3}}), "seed: expected a non-negative integer");
}

TEST(ConfigParse, GridsAndPaths) {
  const cli::Config c = cli::parse_config(
      {{"data", {{"x", "d/x.csv"}, {"y", "/abs/y.csv"}}},
       {"grid", {{"log", {-2, 0, 3}}}},
       {"estimators", {{{"kind", "spls"}, {"grid", {1.0, 2.0}}}}}},
      "/base");
  ASSERT_TRUE(c.grid.has_value());
  ASSERT_EQ(c.grid->size(), 3u);
  EXPECT_NEAR((*c.grid)[0], 0.01, 1e-15);
  EXPECT_NEAR((*c.grid)[2], 1.0, 1e-15);
  EXPECT_EQ(c.data_files->first, "/base/d/x.csv");
  EXPECT_EQ(c.data_files->second, "/abs/y.csv");
  EXPECT_EQ(c.estimators[0].grid->size(), 2u);
}

TEST(EstimateIo, RoundTrip) {
  const fs::path dir = scratch("io");
  Rng rng(3);
  CcaEstimate est;
  est.u_dirs = rcca::testing::gaussian_matrix(rng, 5, 2);
  est.v_dirs = rcca::testing::gaussian_matrix(rng, 4, 2);
  est.rho = Vector(2);
  est.rho << 0.75, 1.0 / 3.0;
  est.provenance.algorithm = "scca";
  est.provenance.penalty = 0.1;
  est.provenance.seed = 99;
  est.provenance.diagnostics["outer_iterations"] = 17;
  est.provenance.warnings.push_back("note");
  write_estimate(est, dir.string(), "e", {"a", "b", "c", "d", "e"}, {"f", "g", "h", "i"});
  const CcaEstimate back = read_estimate((dir / "e.json").string());
  EXPECT_TRUE(back.u_dirs == est.u_dirs);
  EXPECT_TRUE(back.v_dirs == est.v_dirs);
  EXPECT_TRUE(back.rho == est.rho);
  EXPECT_EQ(back.provenance.algorithm, "scca");
  EXPECT_EQ(back.provenance.penalty, 0.1);
  EXPECT_EQ(back.provenance.seed, 99u);
  EXPECT_EQ(back.provenance.diagnostics.at("outer_iterations"), 17.0);
  EXPECT_EQ(back.provenance.warnings.size(), 1u);
}

TEST(CliFit, PlsCaseMatchesCrossCovarianceSingularValues) {
  const fs::path dir = scratch("fit");
  const PairedDataset raw = write_toy(dir);
  const std::string cfg = write_config(dir, {{"data", toy_data()}, {"estimators", {{{"kind", "rcca"}, {"penalty", 1.0}, {"k", 3}}}}});
  ASSERT_EQ(run_cli("fit", cfg, dir / "out"), cli::kOk);
  const json m = json::parse(slurp(dir / "out" / "e0_rcca.json"));
  // Independent oracle: singular values of the centred cross-covariance.
  const Matrix xc = raw.x.rowwise() - raw.x.colwise().mean();
  const Matrix yc = raw.y.rowwise() - raw.y.colwise().mean();
  const Matrix cxy = xc.transpose() * yc / static_cast<double>(raw.n());
  const Vector sv = Eigen::JacobiSVD<Matrix>(cxy).singularValues();
  ASSERT_EQ(m["rho"].size(), 3u);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(m["rho"][i].get<double>(), sv(i), 1e-10);
  const json manifest = json::parse(slurp(dir / "out" / "manifest.json"));
  EXPECT_EQ(manifest["command"], "fit");
  EXPECT_EQ(manifest["outputs"].size(), 3u);
  EXPECT_EQ(manifest["config_hash"], cli::hex64(cli::fnv1a(json::parse(slurp(cfg)).dump())));
  EXPECT_EQ(slurp(dir / "out" / "manifest.json").find(dir.string()), std::string::npos);
}

TEST(CliFit, ExitCodes) {
  const fs::path dir = scratch("codes");
  write_toy(dir);
  std::string log;
  const std::string bad_penalty =
      write_config(dir, {{"data", toy_data()}, {"estimators", {{{"kind", "rcca"}, {"penalty", 2.0}}}}}, "a.json");
  EXPECT_EQ(run_cli("fit", bad_penalty, dir / "a", 1, std::nullopt, &log), cli::kConfigError);
  EXPECT_NE(log.find("estimators[0]"), std::string::npos);

  const std::string missing = write_config(
      dir, {{"data", {{"x", "nope.csv"}, {"y", "y.csv"}}}, {"estimators", {{{"kind", "rcca"}, {"penalty", 0.5}}}}},
      "b.json");
  EXPECT_EQ(run_cli("fit", missing, dir / "b", 1, std::nullopt, &log), cli::kConfigError);
  EXPECT_NE(log.find("data:"), std::string::npos);

  EXPECT_EQ(run_cli("fit", (dir / "absent.json").string(), dir / "c"), cli::kConfigError);
  EXPECT_EQ(run_cli("plot", bad_penalty, dir / "c"), cli::kConfigError);

  const json starved = {{"kind", "gcca"}, {"penalty", 0.01}, {"glasso", {{"max_iter", 1}, {"tol", 1e-14}}}};
  const std::string hard = write_config(dir, {{"data", toy_data()}, {"estimators", {starved}}}, "d.json");
  EXPECT_EQ(run_cli("fit", hard, dir / "d", 1, std::nullopt, &log), cli::kSolverFailure);
  EXPECT_NE(log.find("solver failure"), std::string::npos);
}

TEST(CliSweep, CellFailuresAreRecordedNotFatal) {
  const fs::path dir = scratch("sweep_fail");
  write_toy(dir);
  const json starved = {{"kind", "gcca"}, {"grid", {0.01, 0.1}}, {"k", 1}, {"glasso", {{"max_iter", 1}, {"tol", 1e-14}}}};
  const std::string cfg = write_config(dir, {{"data", toy_data()}, {"estimators", {starved}}, {"folds", {{"V", 3}}},
                                             {"metrics", {{"k_list", {1}}}}});
  ASSERT_EQ(run_cli("sweep", cfg, dir / "out"), cli::kOk);
  const json manifest = json::parse(slurp(dir / "out" / "manifest.json"));
  EXPECT_EQ(manifest["warnings"].size(), 8u);
  const std::string failures = slurp(dir / "out" / "trajectory" / "e0_gcca" / "failures.csv");
  EXPECT_NE(failures.find(",full,"), std::string::npos);
}

TEST(CliSweep, DeterministicAndJobsIndependent) {
  const fs::path dir = scratch("sweep");
  const json cfg_json = {
      {"seed", 5},
      {"generator", {{"name", "canonical_pair"}, {"p", 8}, {"q", 6}, {"n", 80}, {"rhos", {0.9}}, {"support", 3}}},
      {"estimators", {{{"kind", "rcca"}, {"grid", {{"log", {-2, 0, 3}}}}}, {{"kind", "spls"}, {"grid", {1.0, 2.0}}}}},
      {"folds", {{"V", 3}}},
      {"metrics", {{"k_list", {1, 2}}}}};
  const std::string cfg = write_config(dir, cfg_json);
  ASSERT_EQ(run_cli("sweep", cfg, dir / "a", 1), cli::kOk);
  ASSERT_EQ(run_cli("sweep", cfg, dir / "b", 3), cli::kOk);
  ASSERT_EQ(run_cli("sweep", cfg, dir / "c", 1, 6), cli::kOk);
  const std::string metrics = slurp(dir / "a" / "metrics.csv");
  EXPECT_EQ(metrics, slurp(dir / "b" / "metrics.csv"));
  EXPECT_EQ(slurp(dir / "a" / "manifest.json"), slurp(dir / "b" / "manifest.json"));
  EXPECT_NE(metrics, slurp(dir / "c" / "metrics.csv"));
  for (const char* name : {"r2s1-cv", "R2s2-cv", "wt-u1-cv", "vt-U2-cv", "wt-U1", "r2s1,"}) {
    EXPECT_NE(metrics.find(name), std::string::npos) << name;
  }
  EXPECT_TRUE(fs::exists(dir / "a" / "trajectory" / "e0_rcca" / "p2_full.json"));
  EXPECT_TRUE(fs::exists(dir / "a" / "trajectory" / "e1_spls" / "p1_f2_U.csv"));
  EXPECT_EQ(json::parse(slurp(dir / "c" / "manifest.json"))["seed"], 6);
}

TEST(CliCompare, ComparisonAndOverlapFiles) {
  const fs::path dir = scratch("compare");
  const std::string cfg = write_config(
      dir, {{"generator", {{"name", "canonical_pair"}, {"p", 8}, {"q", 8}, {"n", 150}, {"rhos", {0.9, 0.6}}, {"support", 3}}},
            {"estimators", {{{"kind", "rcca"}, {"k", 2}, {"grid", {0.1, 1.0}}}, {{"kind", "spls"}, {"k", 2}, {"grid", {1.5}}}}},
            {"folds", {{"V", 3}}},
            {"registration", {{"mode", "signed_permutation"}, {"k", 2}}}});
  ASSERT_EQ(run_cli("compare", cfg, dir / "out"), cli::kOk);
  const csv::Table t = csv::read_table((dir / "out" / "comparison.csv").string());
  ASSERT_EQ(t.rows.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    double v = 1.0;
    ASSERT_TRUE(csv::parse_double(t.rows[i][i + 1], v));
    EXPECT_NEAR(v, 0.0, 1e-12);
  }
  EXPECT_TRUE(fs::exists(dir / "out" / "overlap" / "e1_spls_f2.csv"));
  const csv::Table reg = csv::read_table((dir / "out" / "registration.csv").string());
  EXPECT_EQ(reg.rows.size(), 6u);
  EXPECT_EQ(reg.rows[0][2], "signed_permutation");
}

TEST(CliBiplot, ThresholdFiltersRows) {
  const fs::path dir = scratch("biplot");
  write_toy(dir);
  const json base = {{"data", toy_data()}, {"estimators", {{{"kind", "rcca"}, {"penalty", 0.2}, {"k", 2}}}}};
  json all = base, filtered = base;
  all["biplot"] = {{"k", 2}, {"threshold", 0.0}};
  filtered["biplot"] = {{"k", 2}, {"threshold", 0.2}, {"view", "y"}};
  ASSERT_EQ(run_cli("biplot", write_config(dir, all, "all.json"), dir / "all"), cli::kOk);
  ASSERT_EQ(run_cli("biplot", write_config(dir, filtered, "f.json"), dir / "f"), cli::kOk);
  const BiplotCoordinates a = read_biplot((dir / "all" / "biplot.csv").string());
  const BiplotCoordinates f = read_biplot((dir / "f" / "biplot.csv").string());
  EXPECT_EQ(a.points.size(), 7u);
  EXPECT_LE(f.points.size(), a.points.size());
  for (const auto& p : f.points) EXPECT_GE(p.sq_norm, 0.2);
}

TEST(CliSynthBench, CanonicalPairPresetWritesLongFormat) {
  const fs::path dir = scratch("bench");
  const std::string cfg = write_config(
      dir, {{"seed", 3},
            {"estimators", {{{"kind", "rcca"}, {"grid", {0.1, 1.0}}}, {{"kind", "spls"}, {"grid", {1.0, 2.0}}}}},
            {"bench", {{"name", "canonical_pair"}, {"p", 8}, {"q", 8}, {"support", 3}, {"n_list", {50, 100}}, {"seeds", 2}}}});
  ASSERT_EQ(run_cli("synth-bench", cfg, dir / "a"), cli::kOk);
  ASSERT_EQ(run_cli("synth-bench", cfg, dir / "b", 2), cli::kOk);
  EXPECT_EQ(slurp(dir / "a" / "bench.csv"), slurp(dir / "b" / "bench.csv"));
  const csv::Table t = csv::read_table((dir / "a" / "bench.csv").string());
  EXPECT_EQ(t.header, (std::vector<std::string>{"experiment", "algorithm", "n", "seed", "selection", "penalty", "metric", "value"}));
  const csv::Table s = csv::read_table((dir / "a" / "summary.csv").string());
  EXPECT_FALSE(s.rows.empty());
  for (const auto& row : s.rows) EXPECT_EQ(row[5], "2");

  const std::string unknown = write_config(dir, {{"bench", {{"name", "fig9"}}}}, "u.json");
  EXPECT_EQ(run_cli("synth-bench", unknown, dir / "u"), cli::kConfigError);
}

TEST(CliBinary, UsageErrorsExitWithConfigCode) {
  const std::string exe = RCCA_CLI_PATH;
  auto status = [](const std::string& cmd) {
    const int s = std::system((cmd + " >/dev/null 2>&1").c_str());
    return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
  };
  EXPECT_EQ(status(exe + " fit"), 2);
  EXPECT_EQ(status(exe + " nosuch --config a --out b"), 2);
  EXPECT_EQ(status(exe + " --help"), 0);
}
