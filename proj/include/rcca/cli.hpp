#pragma once

// Config-driven command runner behind the rcca executable. One JSON schema
// serves every command; outputs are CSV/JSON plus a manifest.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "rcca/biplot.hpp"
#include "rcca/compare.hpp"
#include "rcca/estimate_io.hpp"
#include "rcca/estimators.hpp"
#include "rcca/experiments.hpp"
#include "rcca/metrics.hpp"
#include "rcca/synth.hpp"

namespace rcca::cli {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int { kOk = 0, kFailure = 1, kConfigError = 2, kSolverFailure = 3 };

/// Schema violation; the message starts with the offending field path.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string command;
  std::string config_path;
  std::string out_dir;
  unsigned jobs = 1;
  std::optional<std::uint64_t> seed;
};

inline const std::vector<std::string>& commands() {
  static const std::vector<std::string> names{"fit", "sweep", "compare", "biplot", "synth-bench"};
  return names;
}

inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return s;
}

// ---------------------------------------------------------------------------
// Field access with paths for error messages

namespace detail {

using nlohmann::json;

inline std::string join_path(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

inline void require_object(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError((path.empty() ? "config" : path) + ": expected an object");
}

inline void check_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  require_object(j, path);
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError(join_path(path, key) + ": unknown field");
  }
}

inline const json* find(const json& j, const char* key) {
  const auto it = j.find(key);
  return it == j.end() ? nullptr : &*it;
}

inline double number(const json& j, const std::string& path, const char* key, std::optional<double> def = {}) {
  const json* v = find(j, key);
  if (!v) {
    if (def) return *def;
    throw ConfigError(join_path(path, key) + ": required field missing");
  }
  if (!v->is_number()) throw ConfigError(join_path(path, key) + ": expected a number");
  return v->get<double>();
}

inline std::int64_t integer(const json& j, const std::string& path, const char* key,
                            std::optional<std::int64_t> def = {}) {
  const json* v = find(j, key);
  if (!v) {
    if (def) return *def;
    throw ConfigError(join_path(path, key) + ": required field missing");
  }
  if (!v->is_number_integer()) throw ConfigError(join_path(path, key) + ": expected an integer");
  return v->get<std::int64_t>();
}

inline std::int64_t positive(const json& j, const std::string& path, const char* key,
                             std::optional<std::int64_t> def = {}) {
  const std::int64_t v = integer(j, path, key, def);
  if (v < 1) throw ConfigError(join_path(path, key) + ": must be a positive integer");
  return v;
}

inline std::optional<std::uint64_t> seed_field(const json& j, const std::string& path, const char* key) {
  const json* v = find(j, key);
  if (!v) return std::nullopt;
  if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<std::int64_t>() >= 0)) {
    throw ConfigError(join_path(path, key) + ": expected a non-negative integer");
  }
  return v->get<std::uint64_t>();
}

inline std::string string(const json& j, const std::string& path, const char* key,
                          std::optional<std::string> def = {}) {
  const json* v = find(j, key);
  if (!v) {
    if (def) return *def;
    throw ConfigError(join_path(path, key) + ": required field missing");
  }
  if (!v->is_string()) throw ConfigError(join_path(path, key) + ": expected a string");
  return v->get<std::string>();
}

inline bool boolean(const json& j, const std::string& path, const char* key, bool def) {
  const json* v = find(j, key);
  if (!v) return def;
  if (!v->is_boolean()) throw ConfigError(join_path(path, key) + ": expected true or false");
  return v->get<bool>();
}

inline std::vector<double> number_list(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) throw ConfigError(path + ": expected a non-empty array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ConfigError(path + "[" + std::to_string(i) + "]: expected a number");
    out.push_back(j[i].get<double>());
  }
  return out;
}

inline std::vector<Index> index_list(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) throw ConfigError(path + ": expected a non-empty array of integers");
  std::vector<Index> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number_integer() || j[i].get<std::int64_t>() < 1) {
      throw ConfigError(path + "[" + std::to_string(i) + "]: expected a positive integer");
    }
    out.push_back(static_cast<Index>(j[i].get<std::int64_t>()));
  }
  return out;
}

/// A grid is an explicit list or {"log": [lo_exp, hi_exp, points]}.
inline std::vector<double> grid_value(const json& j, const std::string& path) {
  if (j.is_array()) return number_list(j, path);
  check_keys(j, path, {"log"});
  const json* log = find(j, "log");
  if (!log) throw ConfigError(path + ": expected an array or {\"log\": [lo_exp, hi_exp, points]}");
  const std::vector<double> v = number_list(*log, path + ".log");
  if (v.size() != 3 || v[2] < 1 || v[2] != std::floor(v[2])) {
    throw ConfigError(path + ".log: expected [lo_exp, hi_exp, points]");
  }
  return log_grid(v[0], v[1], static_cast<int>(v[2]));
}

template <class F>
auto rethrow_as_config(const std::string& path, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const InvalidInput& e) {
    throw ConfigError(path + ": " + e.what());
  } catch (const IoError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Parsed configuration

struct GeneratorConfig {
  std::string name;  // canonical_pair | powerlaw | bootstrap
  Index p = 0, q = 0, n = 0;
  std::vector<double> rhos;
  Index support = 1;
  WithinView within_view = WithinView::SuoSp;
  double gamma = 3.0;
  double edge_weight_scale = 0.5;
  BootstrapSpec bootstrap;
  std::string source_x, source_y;
  std::optional<std::uint64_t> seed;
};

struct EstimatorConfig {
  EstimatorKind kind = EstimatorKind::Rcca;
  std::optional<double> penalty;
  std::optional<Index> k;
  std::optional<std::vector<double>> grid;
  LadmmOptions ladmm;
  SplsOptions spls;
  GlassoOptions glasso;
};

struct Config {
  nlohmann::json raw;
  std::filesystem::path base_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::pair<std::string, std::string>> data_files;
  std::optional<GeneratorConfig> generator;
  std::vector<EstimatorConfig> estimators;
  std::optional<std::vector<double>> grid;
  int folds = 0;
  std::optional<std::uint64_t> folds_seed;
  MetricSelection metrics;
  RegistrationMode registration = RegistrationMode::Orthogonal;
  ComparisonMetric comparison = ComparisonMetric::VariateSubspace;
  Index compare_k = 3;
  bool overlap_orthogonalise = true;
  Index biplot_k = 2;
  View biplot_view = View::X;
  double biplot_threshold = 0.0;
  std::size_t biplot_estimator = 0;
  std::optional<nlohmann::json> bench;
  bool write_data = false;
};

namespace detail {

inline std::string resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return (path.is_absolute() ? path : base / path).lexically_normal().string();
}

inline GeneratorConfig parse_generator(const json& g, const std::filesystem::path& base) {
  const std::string path = "generator";
  require_object(g, path);
  GeneratorConfig out;
  out.name = string(g, path, "name");
  out.seed = seed_field(g, path, "seed");
  out.n = static_cast<Index>(positive(g, path, "n"));
  if (out.name == "canonical_pair") {
    check_keys(g, path, {"name", "seed", "n", "p", "q", "rhos", "support", "within_view"});
    out.p = static_cast<Index>(positive(g, path, "p"));
    out.q = static_cast<Index>(positive(g, path, "q"));
    const json* r = find(g, "rhos");
    out.rhos = r ? number_list(*r, path + ".rhos") : std::vector<double>{0.9};
    out.support = static_cast<Index>(positive(g, path, "support", 5));
    out.within_view = rethrow_as_config(path + ".within_view",
                                        [&] { return parse_within_view(string(g, path, "within_view", "suo_sp")); });
  } else if (out.name == "powerlaw") {
    check_keys(g, path, {"name", "seed", "n", "p", "q", "gamma", "edge_weight_scale"});
    out.p = static_cast<Index>(positive(g, path, "p"));
    out.q = static_cast<Index>(positive(g, path, "q"));
    out.gamma = number(g, path, "gamma", 3.0);
    out.edge_weight_scale = number(g, path, "edge_weight_scale", 0.5);
  } else if (out.name == "bootstrap") {
    check_keys(g, path, {"name", "seed", "n", "mode", "lambda", "alpha", "k", "source"});
    const std::string mode = string(g, path, "mode", "glasso");
    if (mode == "glasso") out.bootstrap.mode = BootstrapMode::Glasso;
    else if (mode == "scca_ridge") out.bootstrap.mode = BootstrapMode::SccaRidge;
    else throw ConfigError(path + ".mode: expected glasso or scca_ridge");
    out.bootstrap.lambda = number(g, path, "lambda");
    out.bootstrap.alpha = number(g, path, "alpha", 0.0);
    out.bootstrap.k = static_cast<Index>(positive(g, path, "k", 1));
    const json* src = find(g, "source");
    if (!src) throw ConfigError(path + ".source: required field missing");
    check_keys(*src, path + ".source", {"x", "y"});
    out.source_x = resolve(base, string(*src, path + ".source", "x"));
    out.source_y = resolve(base, string(*src, path + ".source", "y"));
  } else {
    throw ConfigError(path + ".name: unknown generator '" + out.name + "' (canonical_pair, powerlaw, bootstrap)");
  }
  return out;
}

inline EstimatorConfig parse_estimator(const json& e, const std::string& path) {
  check_keys(e, path, {"kind", "penalty", "k", "grid", "ladmm", "spls", "glasso"});
  EstimatorConfig out;
  out.kind = rethrow_as_config(path + ".kind", [&] { return parse_estimator_kind(string(e, path, "kind")); });
  if (find(e, "penalty")) out.penalty = number(e, path, "penalty");
  if (find(e, "k")) out.k = static_cast<Index>(positive(e, path, "k"));
  if (const json* g = find(e, "grid")) out.grid = grid_value(*g, path + ".grid");
  if (const json* l = find(e, "ladmm")) {
    const std::string lp = path + ".ladmm";
    check_keys(*l, lp, {"lambda_step", "n_steps_admm", "tol", "max_outer", "recycle_duals"});
    out.ladmm.lambda_step = number(*l, lp, "lambda_step", out.ladmm.lambda_step);
    out.ladmm.n_steps_admm = static_cast<int>(positive(*l, lp, "n_steps_admm", out.ladmm.n_steps_admm));
    out.ladmm.tol = number(*l, lp, "tol", out.ladmm.tol);
    out.ladmm.max_outer = static_cast<int>(positive(*l, lp, "max_outer", out.ladmm.max_outer));
    out.ladmm.recycle_duals = boolean(*l, lp, "recycle_duals", out.ladmm.recycle_duals);
  }
  if (const json* s = find(e, "spls")) {
    const std::string sp = path + ".spls";
    check_keys(*s, sp, {"tol", "max_sweeps"});
    out.spls.tol = number(*s, sp, "tol", out.spls.tol);
    out.spls.max_sweeps = static_cast<int>(positive(*s, sp, "max_sweeps", out.spls.max_sweeps));
  }
  if (const json* g = find(e, "glasso")) {
    const std::string gp = path + ".glasso";
    check_keys(*g, gp, {"tol", "max_iter", "admm_rho"});
    out.glasso.tol = number(*g, gp, "tol", out.glasso.tol);
    out.glasso.max_iter = static_cast<int>(positive(*g, gp, "max_iter", out.glasso.max_iter));
    out.glasso.admm_rho = number(*g, gp, "admm_rho", out.glasso.admm_rho);
  }
  return out;
}

}  // namespace detail

inline Config parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  using namespace detail;
  check_keys(j, "", {"seed", "data", "generator", "estimators", "grid", "folds", "metrics", "registration", "biplot",
                     "bench", "output"});
  Config c;
  c.raw = j;
  c.base_dir = base_dir;
  c.seed = seed_field(j, "", "seed");
  const json* data = find(j, "data");
  const json* gen = find(j, "generator");
  if (data && gen) throw ConfigError("data: give either data or generator, not both");
  if (data) {
    check_keys(*data, "data", {"x", "y"});
    c.data_files = {resolve(base_dir, string(*data, "data", "x")), resolve(base_dir, string(*data, "data", "y"))};
  }
  if (gen) c.generator = parse_generator(*gen, base_dir);
  if (const json* es = find(j, "estimators")) {
    if (!es->is_array()) throw ConfigError("estimators: expected an array");
    for (std::size_t i = 0; i < es->size(); ++i) {
      c.estimators.push_back(parse_estimator((*es)[i], "estimators[" + std::to_string(i) + "]"));
    }
  }
  if (const json* g = find(j, "grid")) c.grid = grid_value(*g, "grid");
  if (const json* f = find(j, "folds")) {
    check_keys(*f, "folds", {"V", "seed"});
    c.folds = static_cast<int>(integer(*f, "folds", "V"));
    if (c.folds < 2) throw ConfigError("folds.V: must be at least 2");
    c.folds_seed = seed_field(*f, "folds", "seed");
  }
  if (const json* m = find(j, "metrics")) {
    check_keys(*m, "metrics", {"k_list", "aggregations", "instability"});
    if (const json* k = find(*m, "k_list")) c.metrics.k_list = index_list(*k, "metrics.k_list");
    if (const json* a = find(*m, "aggregations")) {
      if (!a->is_array() || a->empty()) throw ConfigError("metrics.aggregations: expected a non-empty array");
      c.metrics.aggregations.clear();
      for (std::size_t i = 0; i < a->size(); ++i) {
        const std::string p = "metrics.aggregations[" + std::to_string(i) + "]";
        if (!(*a)[i].is_string()) throw ConfigError(p + ": expected a string");
        c.metrics.aggregations.push_back(rethrow_as_config(p, [&] { return parse_aggregation((*a)[i].get<std::string>()); }));
      }
    }
    c.metrics.instability = boolean(*m, "metrics", "instability", true);
  }
  if (const json* r = find(j, "registration")) {
    check_keys(*r, "registration", {"mode", "metric", "k", "orthogonalise"});
    c.registration = rethrow_as_config("registration.mode", [&] {
      return parse_registration_mode(string(*r, "registration", "mode", "orthogonal"));
    });
    c.comparison = rethrow_as_config("registration.metric", [&] {
      return parse_comparison_metric(string(*r, "registration", "metric", "vt_Uk"));
    });
    c.compare_k = static_cast<Index>(positive(*r, "registration", "k", 3));
    c.overlap_orthogonalise = boolean(*r, "registration", "orthogonalise", true);
  }
  if (const json* b = find(j, "biplot")) {
    check_keys(*b, "biplot", {"k", "view", "threshold", "estimator"});
    c.biplot_k = static_cast<Index>(positive(*b, "biplot", "k", 2));
    c.biplot_view = rethrow_as_config("biplot.view", [&] { return parse_view(string(*b, "biplot", "view", "x")); });
    c.biplot_threshold = number(*b, "biplot", "threshold", 0.0);
    const std::int64_t idx = integer(*b, "biplot", "estimator", 0);
    if (idx < 0) throw ConfigError("biplot.estimator: must be a non-negative index");
    c.biplot_estimator = static_cast<std::size_t>(idx);
  }
  if (const json* b = find(j, "bench")) {
    require_object(*b, "bench");
    c.bench = *b;
  }
  if (const json* o = find(j, "output")) {
    check_keys(*o, "output", {"write_data"});
    c.write_data = boolean(*o, "output", "write_data", false);
  }
  return c;
}

inline Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config file");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": invalid JSON (" + std::string(e.what()) + ")");
  }
  return parse_config(j, std::filesystem::path(path).parent_path());
}

// ---------------------------------------------------------------------------
// Run context and shared steps

struct LoadedData {
  PairedDataset data;  // centred
  std::optional<CovarianceModel> cov;
  std::optional<CcaEstimate> truth;
};

class Runner {
public:
  Runner(Config config, const Options& opts, std::ostream& log)
      : cfg_(std::move(config)), opts_(opts), log_(log), out_(opts.out_dir) {
    base_seed_ = opts.seed ? *opts.seed : cfg_.seed.value_or(0);
  }

  int run() {
    std::filesystem::create_directories(out_);
    const std::string& c = opts_.command;
    if (c == "fit") fit();
    else if (c == "sweep") sweep();
    else if (c == "compare") compare();
    else if (c == "biplot") biplot();
    else if (c == "synth-bench") synth_bench();
    else throw ConfigError("command: unknown command '" + c + "'");
    write_manifest();
    if (!warnings_.empty()) log_ << warnings_.size() << " warning(s); see manifest.json\n";
    return kOk;
  }

private:
  Config cfg_;
  Options opts_;
  std::ostream& log_;
  std::filesystem::path out_;
  std::uint64_t base_seed_ = 0;
  std::vector<std::string> written_;
  std::vector<std::string> warnings_;

  void write(const std::string& rel, const std::string& text) {
    const std::filesystem::path p = out_ / rel;
    std::filesystem::create_directories(p.parent_path());
    csv::write_text(p.string(), text);
    written_.push_back(rel);
  }

  void record_estimate(const CcaEstimate& est, const std::string& dir, const std::string& stem,
                       const PairedDataset& data) {
    write_estimate(est, (out_ / dir).string(), stem, data.x_names, data.y_names);
    const std::string prefix = dir.empty() ? stem : dir + "/" + stem;
    written_.push_back(prefix + ".json");
    written_.push_back(prefix + "_U.csv");
    written_.push_back(prefix + "_V.csv");
  }

  std::uint64_t fold_seed() const { return cfg_.folds_seed.value_or(derive_seed(base_seed_, {2})); }

  LoadedData load_data() {
    LoadedData out;
    if (cfg_.data_files) {
      out.data = detail::rethrow_as_config("data", [&] {
        return center(read_two_view_csv(cfg_.data_files->first, cfg_.data_files->second));
      });
    } else if (cfg_.generator) {
      const GeneratorConfig& g = *cfg_.generator;
      const std::uint64_t gs = g.seed.value_or(derive_seed(base_seed_, {1}));
      if (g.name == "canonical_pair") {
        const Vector rhos = Eigen::Map<const Vector>(g.rhos.data(), static_cast<Index>(g.rhos.size()));
        const PlantedModel m = detail::rethrow_as_config("generator", [&] {
          return canonical_pair_covariance(g.p, g.q, rhos, g.support, g.within_view, derive_seed(gs, {0}));
        });
        out.cov = m.cov;
        out.truth = m.truth;
      } else if (g.name == "powerlaw") {
        out.cov = detail::rethrow_as_config("generator", [&] {
          return powerlaw_covariance(g.p, g.q, g.gamma, g.edge_weight_scale, derive_seed(gs, {0}));
        });
      } else {
        const PairedDataset source = detail::rethrow_as_config("generator.source", [&] {
          return center(read_two_view_csv(g.source_x, g.source_y));
        });
        BootstrapSpec spec = g.bootstrap;
        out.cov = detail::rethrow_as_config("generator", [&] { return bootstrap_covariance(source, spec).cov; });
      }
      if (!out.truth) out.truth = cca_from_covariance(*out.cov, std::min(out.cov->p(), out.cov->q()));
      out.data = center(mvn_sample(*out.cov, g.n, derive_seed(gs, {1})));
      if (cfg_.write_data) {
        write("data/x.csv", view_csv_text(out.data.x_names, out.data.x));
        write("data/y.csv", view_csv_text(out.data.y_names, out.data.y));
      }
    } else {
      throw ConfigError("data: command needs a data or generator section");
    }
    return out;
  }

  void require_estimators() const {
    if (cfg_.estimators.empty()) throw ConfigError("estimators: at least one estimator is required");
  }

  Index estimator_k(const EstimatorConfig& e, const PairedDataset& data) const {
    const Index cap = std::min(data.p(), data.q());
    if (e.k) {
      if (*e.k > cap) throw ConfigError("estimators.k: exceeds min(p, q) = " + std::to_string(cap));
      return *e.k;
    }
    const Index want = *std::max_element(cfg_.metrics.k_list.begin(), cfg_.metrics.k_list.end());
    return std::min(want, cap);
  }

  EstimatorSpec make_spec(const EstimatorConfig& e, std::size_t i, const PairedDataset& data,
                          std::optional<double> penalty) const {
    EstimatorSpec spec;
    spec.kind = e.kind;
    spec.k = estimator_k(e, data);
    spec.ladmm = e.ladmm;
    spec.spls = e.spls;
    spec.glasso = e.glasso;
    if (penalty) {
      spec.penalty = *penalty;
      detail::rethrow_as_config("estimators[" + std::to_string(i) + "]", [&] {
        spec.validate();
        return 0;
      });
    }
    return spec;
  }

  std::vector<double> grid_for(const EstimatorConfig& e, std::size_t i, const PairedDataset& data) const {
    std::vector<double> g = e.grid ? *e.grid : cfg_.grid ? *cfg_.grid : default_grid(e.kind, data.p(), data.q());
    for (double pen : g) make_spec(e, i, data, pen);
    return g;
  }

  double required_penalty(const EstimatorConfig& e, std::size_t i) const {
    if (!e.penalty) throw ConfigError("estimators[" + std::to_string(i) + "].penalty: required field missing");
    return *e.penalty;
  }

  static std::string stem(const EstimatorConfig& e, std::size_t i) {
    return "e" + std::to_string(i) + "_" + to_string(e.kind);
  }

  CcaEstimate fit_one(const EstimatorSpec& spec, const PairedDataset& data) {
    CcaEstimate est = rcca::fit(spec, data);
    est.provenance.seed = base_seed_;
    for (const auto& w : est.provenance.warnings) warnings_.push_back(est.provenance.algorithm + ": " + w);
    return est;
  }

  void fit() {
    require_estimators();
    const LoadedData d = load_data();
    for (std::size_t i = 0; i < cfg_.estimators.size(); ++i) {
      const EstimatorConfig& e = cfg_.estimators[i];
      const EstimatorSpec spec = make_spec(e, i, d.data, required_penalty(e, i));
      record_estimate(fit_one(spec, d.data), "", stem(e, i), d.data);
    }
  }

  void sweep() {
    require_estimators();
    const LoadedData d = load_data();
    FoldPlan plan{d.data.n(), 0, 0, std::vector<int>(static_cast<std::size_t>(d.data.n()), 0)};
    if (cfg_.folds >= 2) {
      plan = detail::rethrow_as_config("folds", [&] { return make_folds(d.data.n(), cfg_.folds, fold_seed()); });
    }
    MetricReport all;
    for (std::size_t i = 0; i < cfg_.estimators.size(); ++i) {
      const EstimatorConfig& e = cfg_.estimators[i];
      const std::vector<double> grid = grid_for(e, i, d.data);
      const TrajectoryResult traj = sweep_trajectory(make_spec(e, i, d.data, std::nullopt), d.data, grid, plan,
                                                     opts_.jobs);
      const std::string dir = "trajectory/" + stem(e, i);
      std::string failures = "penalty,fold,error\n";
      for (std::size_t pi = 0; pi < grid.size(); ++pi) {
        for (int f = 0; f <= plan.folds; ++f) {
          const TrajectoryCell& cell = traj.cells[pi][static_cast<std::size_t>(f)];
          const std::string fold = f == plan.folds ? "full" : "f" + std::to_string(f);
          if (cell.ok()) {
            record_estimate(*cell.estimate, dir, "p" + std::to_string(pi) + "_" + fold, d.data);
          } else {
            failures += csv::format_double(grid[pi]) + "," + fold + ",\"" + cell.error + "\"\n";
            warnings_.push_back(stem(e, i) + " penalty " + csv::format_double(grid[pi]) + " " + fold + ": " + cell.error);
          }
        }
      }
      write(dir + "/failures.csv", failures);
      const MetricReport r = evaluate_trajectory(traj, d.data, cfg_.metrics, d.cov, d.truth);
      all.records.insert(all.records.end(), r.records.begin(), r.records.end());
    }
    write("metrics.csv", all.to_csv());
  }

  void compare() {
    require_estimators();
    const LoadedData d = load_data();
    std::vector<CcaEstimate> pooled;
    std::vector<std::string> labels;
    std::string residuals = "estimator,fold,mode,residual\n";
    const FoldPlan empty{d.data.n(), 0, 0, std::vector<int>(static_cast<std::size_t>(d.data.n()), 0)};
    for (std::size_t i = 0; i < cfg_.estimators.size(); ++i) {
      const EstimatorConfig& e = cfg_.estimators[i];
      const std::vector<double> grid = grid_for(e, i, d.data);
      const EstimatorSpec base = make_spec(e, i, d.data, std::nullopt);
      if (base.k < cfg_.compare_k) {
        throw ConfigError("registration.k: exceeds K of estimators[" + std::to_string(i) + "]");
      }
      const TrajectoryResult traj = sweep_trajectory(base, d.data, grid, empty, opts_.jobs);
      for (std::size_t pi = 0; pi < grid.size(); ++pi) {
        const TrajectoryCell& cell = traj.full(pi);
        if (!cell.ok()) {
          warnings_.push_back(stem(e, i) + " penalty " + csv::format_double(grid[pi]) + ": " + cell.error);
          continue;
        }
        pooled.push_back(*cell.estimate);
        labels.push_back(estimate_label(*cell.estimate));
      }
      if (cfg_.folds < 2) continue;
      // Full-data variates against each training fold's variates at one penalty.
      const double pen = e.penalty ? *e.penalty : grid[grid.size() / 2];
      const FoldPlan plan = detail::rethrow_as_config("folds", [&] { return make_folds(d.data.n(), cfg_.folds, fold_seed()); });
      const TrajectoryResult at = sweep_trajectory(make_spec(e, i, d.data, pen), d.data, {pen}, plan, opts_.jobs);
      if (!at.full(0).ok()) {
        warnings_.push_back(stem(e, i) + " overlap reference failed: " + at.full(0).error);
        continue;
      }
      const Index k = cfg_.compare_k;
      const Matrix z = unit_norm_variates(d.data.x, at.full(0).estimate->u_dirs.leftCols(k));
      std::vector<std::string> row_labels, col_labels;
      for (Index c = 0; c < k; ++c) {
        row_labels.push_back("full_" + std::to_string(c + 1));
        col_labels.push_back("fold_" + std::to_string(c + 1));
      }
      for (int f = 0; f < plan.folds; ++f) {
        const TrajectoryCell& cell = at.fold(0, f);
        if (!cell.ok()) {
          warnings_.push_back(stem(e, i) + " fold " + std::to_string(f) + ": " + cell.error);
          continue;
        }
        const Matrix w = unit_norm_variates(d.data.x, cell.estimate->u_dirs.leftCols(k));
        const Registration reg = register_variates(z, w, cfg_.registration);
        residuals += stem(e, i) + "," + std::to_string(f) + "," + to_string(cfg_.registration) + "," +
                     csv::format_double(reg.residual) + "\n";
        const OverlapMatrix m = overlap_matrix(z, w * reg.transform, true, cfg_.overlap_orthogonalise);
        write("overlap/" + stem(e, i) + "_f" + std::to_string(f) + ".csv", overlap_csv_text(m, row_labels, col_labels));
      }
    }
    const Matrix cmp = trajectory_comparison(pooled, d.data, cfg_.comparison, cfg_.compare_k);
    write("comparison.csv", matrix_csv_text(cmp, labels));
    if (cfg_.folds >= 2) write("registration.csv", residuals);
  }

  void biplot() {
    require_estimators();
    if (cfg_.biplot_estimator >= cfg_.estimators.size()) throw ConfigError("biplot.estimator: index out of range");
    const LoadedData d = load_data();
    const std::size_t i = cfg_.biplot_estimator;
    const EstimatorConfig& e = cfg_.estimators[i];
    EstimatorSpec spec = make_spec(e, i, d.data, required_penalty(e, i));
    if (spec.k < cfg_.biplot_k) {
      if (e.k) throw ConfigError("biplot.k: exceeds K of the chosen estimator");
      spec.k = cfg_.biplot_k;
    }
    const CcaEstimate est = fit_one(spec, d.data);
    record_estimate(est, "", stem(e, i), d.data);
    const BiplotCoordinates bc = structure_correlations(d.data, est, cfg_.biplot_view, cfg_.biplot_k);
    for (const auto& w : bc.warnings) warnings_.push_back("biplot: " + w);
    write("biplot.csv", biplot_csv_text(bc, cfg_.biplot_threshold));
  }

  std::vector<GridSpec> bench_grids(Index p, Index q) const {
    if (cfg_.estimators.empty()) return default_grids(p, q);
    std::vector<GridSpec> out;
    for (std::size_t i = 0; i < cfg_.estimators.size(); ++i) {
      const EstimatorConfig& e = cfg_.estimators[i];
      std::vector<double> g = e.grid ? *e.grid : cfg_.grid ? *cfg_.grid : default_grid(e.kind, p, q);
      for (double pen : g) {
        EstimatorSpec spec;
        spec.kind = e.kind;
        spec.penalty = pen;
        detail::rethrow_as_config("estimators[" + std::to_string(i) + "].grid", [&] {
          spec.validate();
          return 0;
        });
      }
      out.push_back({e.kind, std::move(g)});
    }
    return out;
  }

  void synth_bench() {
    using namespace detail;
    if (!cfg_.bench) throw ConfigError("bench: synth-bench needs a bench section");
    const json& b = *cfg_.bench;
    const std::string name = string(b, "bench", "name");
    const std::uint64_t seed = seed_field(b, "bench", "seed").value_or(derive_seed(base_seed_, {3}));
    BenchResult result;
    if (name == "canonical_pair") {
      check_keys(b, "bench", {"name", "seed", "p", "q", "rhos", "support", "within_view", "n_list", "seeds", "folds"});
      CanonicalPairBenchConfig c;
      c.p = static_cast<Index>(positive(b, "bench", "p", c.p));
      c.q = static_cast<Index>(positive(b, "bench", "q", c.q));
      if (const json* r = find(b, "rhos")) c.rhos = number_list(*r, "bench.rhos");
      c.support = static_cast<Index>(positive(b, "bench", "support", c.support));
      c.within_view = rethrow_as_config("bench.within_view",
                                        [&] { return parse_within_view(string(b, "bench", "within_view", "suo_sp")); });
      if (const json* n = find(b, "n_list")) c.n_list = index_list(*n, "bench.n_list");
      c.seeds = static_cast<int>(positive(b, "bench", "seeds", c.seeds));
      c.folds = static_cast<int>(integer(b, "bench", "folds", 0));
      if (c.folds == 1 || c.folds < 0) throw ConfigError("bench.folds: must be 0 or at least 2");
      c.seed = seed;
      c.grids = bench_grids(c.p, c.q);
      c.jobs = opts_.jobs;
      result = rethrow_as_config("bench", [&] { return canonical_pair_bench(c); });
    } else if (name == "bootstrap_panel") {
      check_keys(b, "bench", {"name", "seed", "p", "q", "seed_rhos", "seed_support", "seed_n", "glasso_lambda", "n",
                              "seeds", "folds", "k_list", "criteria"});
      BootstrapPanelConfig c;
      c.p = static_cast<Index>(positive(b, "bench", "p", c.p));
      c.q = static_cast<Index>(positive(b, "bench", "q", c.q));
      if (const json* r = find(b, "seed_rhos")) c.seed_rhos = number_list(*r, "bench.seed_rhos");
      c.seed_support = static_cast<Index>(positive(b, "bench", "seed_support", c.seed_support));
      c.seed_n = static_cast<Index>(positive(b, "bench", "seed_n", c.seed_n));
      c.glasso_lambda = number(b, "bench", "glasso_lambda", c.glasso_lambda);
      c.n = static_cast<Index>(positive(b, "bench", "n", c.n));
      c.seeds = static_cast<int>(positive(b, "bench", "seeds", c.seeds));
      c.folds = static_cast<int>(positive(b, "bench", "folds", c.folds));
      if (const json* k = find(b, "k_list")) c.k_list = index_list(*k, "bench.k_list");
      if (const json* cr = find(b, "criteria")) {
        if (!cr->is_array() || cr->empty()) throw ConfigError("bench.criteria: expected a non-empty array");
        c.criteria.clear();
        for (const auto& v : *cr) {
          if (!v.is_string()) throw ConfigError("bench.criteria: expected metric names");
          c.criteria.push_back(v.get<std::string>());
        }
      }
      c.seed = seed;
      c.grids = bench_grids(c.p, c.q);
      c.jobs = opts_.jobs;
      result = rethrow_as_config("bench", [&] { return bootstrap_panel_bench(c); });
    } else {
      throw ConfigError("bench.name: unknown benchmark '" + name + "' (canonical_pair, bootstrap_panel)");
    }
    for (const auto& w : result.warnings) warnings_.push_back(w);
    write("bench.csv", result.to_csv());
    write("summary.csv", bench_summary(result));
  }

  /// Median over replicates for every (algorithm, n, selection, metric) of
  /// the selected-penalty rows.
  static std::string bench_summary(const BenchResult& r) {
    std::map<std::tuple<std::string, std::string, Index, std::string, std::string>, std::vector<double>> groups;
    for (const auto& row : r.rows) {
      if (row.selection == "grid") continue;
      groups[{row.experiment, row.algorithm, row.n, row.selection, row.metric}].push_back(row.value);
    }
    std::string out = "experiment,algorithm,n,selection,metric,replicates,median\n";
    for (const auto& [key, values] : groups) {
      const auto& [exp, algo, n, selection, metric] = key;
      out += exp + "," + algo + "," + std::to_string(n) + "," + selection + "," + metric + "," +
             std::to_string(values.size()) + "," + csv::format_double(median(values)) + "\n";
    }
    return out;
  }

  void write_manifest() {
    nlohmann::json m;
    m["tool"] = "rcca";
    m["command"] = opts_.command;
    m["config_file"] = std::filesystem::path(opts_.config_path).filename().string();
    m["config_hash"] = hex64(fnv1a(cfg_.raw.dump()));
    m["seed"] = base_seed_;
    m["versions"] = {{"rcca", kVersion},
                     {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                   std::to_string(EIGEN_MINOR_VERSION)},
                     {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                           std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                           std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
    nlohmann::json files = nlohmann::json::object();
    for (const auto& rel : written_) {
      std::ifstream in(out_ / rel, std::ios::binary);
      std::ostringstream ss;
      ss << in.rdbuf();
      files[rel] = hex64(fnv1a(ss.str()));
    }
    m["outputs"] = files;
    m["warnings"] = warnings_;
    csv::write_text((out_ / "manifest.json").string(), m.dump(2) + "\n");
  }
};

/// Runs one command; returns the process exit code. Messages go to `log`.
inline int run(const Options& opts, std::ostream& log) {
  try {
    if (std::find(commands().begin(), commands().end(), opts.command) == commands().end()) {
      throw ConfigError("command: unknown command '" + opts.command + "'");
    }
    if (opts.jobs < 1) throw ConfigError("--jobs: must be at least 1");
    Runner runner(load_config(opts.config_path), opts, log);
    return runner.run();
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const ConvergenceFailure& e) {
    log << "solver failure: " << e.what() << "\n";
    return kSolverFailure;
  } catch (const InvalidInput& e) {
    log << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const IoError& e) {
    log << "i/o error: " << e.what() << "\n";
    return kFailure;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    return kFailure;
  }
}

}  // namespace rcca::cli
