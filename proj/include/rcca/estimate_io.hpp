#pragma once

// On-disk form of a CcaEstimate: a JSON manifest (provenance, K, rho) next to
// two CSV files holding U and V, one row per variable.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rcca/cca_core.hpp"
#include "rcca/csv.hpp"

namespace rcca {

namespace detail {

inline nlohmann::json number_or_null(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

}  // namespace detail

/// Directions as CSV: header `variable,<prefix>1..<prefix>K`, one row per variable.
inline std::string directions_csv_text(const Matrix& dirs, const std::vector<std::string>& names,
                                       const std::string& prefix) {
  std::vector<std::string> header{"variable"};
  for (Index k = 0; k < dirs.cols(); ++k) header.push_back(prefix + std::to_string(k + 1));
  std::string out = csv::join(header) + "\n";
  for (Index r = 0; r < dirs.rows(); ++r) {
    out += r < static_cast<Index>(names.size()) ? names[static_cast<std::size_t>(r)] : std::to_string(r + 1);
    for (Index k = 0; k < dirs.cols(); ++k) out += "," + csv::format_double(dirs(r, k));
    out += '\n';
  }
  return out;
}

inline Matrix read_directions_csv(const std::string& path, std::vector<std::string>* names = nullptr) {
  const csv::Table t = csv::read_table(path);
  if (t.header.empty() || t.header[0] != "variable") throw InvalidInput(path + ": expected a 'variable' column");
  const auto k = static_cast<Index>(t.header.size()) - 1;
  Matrix m(static_cast<Index>(t.rows.size()), k);
  if (names) names->clear();
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    if (static_cast<Index>(t.rows[r].size()) != k + 1) throw InvalidInput(path + ": ragged row");
    if (names) names->push_back(t.rows[r][0]);
    for (Index c = 0; c < k; ++c) {
      if (!csv::parse_double(t.rows[r][static_cast<std::size_t>(c + 1)], m(static_cast<Index>(r), c))) {
        throw InvalidInput(path + ": non-numeric entry");
      }
    }
  }
  return m;
}

inline nlohmann::json provenance_json(const Provenance& p) {
  nlohmann::json j;
  j["algorithm"] = p.algorithm;
  j["penalty"] = detail::number_or_null(p.penalty);
  j["fold"] = p.fold ? nlohmann::json(*p.fold) : nlohmann::json("full");
  j["seed"] = p.seed;
  j["degenerate"] = p.degenerate;
  j["converged"] = p.converged;
  nlohmann::json diag = nlohmann::json::object();
  for (const auto& [key, value] : p.diagnostics) diag[key] = detail::number_or_null(value);
  j["diagnostics"] = diag;
  j["warnings"] = p.warnings;
  return j;
}

inline Provenance provenance_from_json(const nlohmann::json& j) {
  Provenance p;
  p.algorithm = j.at("algorithm").get<std::string>();
  p.penalty = j.at("penalty").is_null() ? std::nan("") : j.at("penalty").get<double>();
  if (j.at("fold").is_number_integer()) p.fold = j.at("fold").get<int>();
  p.seed = j.at("seed").get<std::uint64_t>();
  p.degenerate = j.at("degenerate").get<bool>();
  p.converged = j.at("converged").get<bool>();
  for (const auto& [key, value] : j.at("diagnostics").items()) {
    p.diagnostics[key] = value.is_null() ? std::nan("") : value.get<double>();
  }
  p.warnings = j.at("warnings").get<std::vector<std::string>>();
  return p;
}

/// Writes `<dir>/<stem>.json`, `<dir>/<stem>_U.csv`, `<dir>/<stem>_V.csv`.
inline void write_estimate(const CcaEstimate& est, const std::string& dir, const std::string& stem,
                           const std::vector<std::string>& x_names = {},
                           const std::vector<std::string>& y_names = {}) {
  std::filesystem::create_directories(dir);
  const std::string u_file = stem + "_U.csv";
  const std::string v_file = stem + "_V.csv";
  csv::write_text((std::filesystem::path(dir) / u_file).string(), directions_csv_text(est.u_dirs, x_names, "u"));
  csv::write_text((std::filesystem::path(dir) / v_file).string(), directions_csv_text(est.v_dirs, y_names, "v"));
  nlohmann::json j;
  j["provenance"] = provenance_json(est.provenance);
  j["K"] = est.k();
  j["p"] = est.p();
  j["q"] = est.q();
  std::vector<double> rho(est.rho.data(), est.rho.data() + est.rho.size());
  j["rho"] = rho;
  j["u_file"] = u_file;
  j["v_file"] = v_file;
  csv::write_text((std::filesystem::path(dir) / (stem + ".json")).string(), j.dump(2) + "\n");
}

inline CcaEstimate read_estimate(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open '" + manifest_path + "' for reading");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(manifest_path + ": " + e.what());
  }
  const auto dir = std::filesystem::path(manifest_path).parent_path();
  CcaEstimate est;
  est.provenance = provenance_from_json(j.at("provenance"));
  const auto rho = j.at("rho").get<std::vector<double>>();
  est.rho = Eigen::Map<const Vector>(rho.data(), static_cast<Index>(rho.size()));
  est.u_dirs = read_directions_csv((dir / j.at("u_file").get<std::string>()).string());
  est.v_dirs = read_directions_csv((dir / j.at("v_file").get<std::string>()).string());
  if (est.u_dirs.cols() != est.k() || est.v_dirs.cols() != est.k()) {
    throw InvalidInput(manifest_path + ": direction files do not match K");
  }
  return est;
}

}  // namespace rcca
