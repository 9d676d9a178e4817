#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rdpg/alignment.hpp"
#include "rdpg/dynamics.hpp"
#include "rdpg/geometry.hpp"
#include "rdpg/inference.hpp"
#include "rdpg/io.hpp"
#include "rdpg/observation.hpp"

namespace rdpg {

inline nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  std::vector<double> entries;
  entries.reserve(static_cast<std::size_t>(m.size()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index c = 0; c < m.cols(); ++c) entries.push_back(m(i, c));
  j["entries"] = entries;  // row-major
  return j;
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
  const Index rows = j.at("rows").get<Index>();
  const Index cols = j.at("cols").get<Index>();
  const auto entries = j.at("entries").get<std::vector<double>>();
  if (static_cast<Index>(entries.size()) != rows * cols)
    throw IoError("matrix_from_json: entry count mismatch");
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index c = 0; c < cols; ++c) m(i, c) = entries[static_cast<std::size_t>(i * cols + c)];
  return m;
}

// --- Trajectory: directory of per-state CSVs + index, or one JSON bundle ---

inline std::string indexed_name(const char* stem, std::size_t i) {
  std::ostringstream out;
  out << stem << '_' << std::setw(4) << std::setfill('0') << i << ".csv";
  return out.str();
}

inline void write_trajectory_dir(const std::filesystem::path& dir, const Trajectory& traj) {
  std::filesystem::create_directories(dir);
  nlohmann::json index;
  index["times"] = traj.times;
  index["step"] = traj.step;
  index["kind"] = traj.kind == TrajectoryKind::latent ? "latent" : "probability";
  if (traj.spec) index["dynamics"] = *traj.spec;
  std::vector<std::string> files;
  for (std::size_t t = 0; t < traj.states.size(); ++t) {
    const std::string name = indexed_name("state", t);
    write_matrix_csv(dir / name, traj.states[t]);
    files.push_back(name);
  }
  index["files"] = files;
  std::ofstream out(dir / "index.json");
  if (!out) throw IoError("cannot write trajectory index");
  out << index.dump(2) << '\n';
}

inline Trajectory read_trajectory_dir(const std::filesystem::path& dir) {
  std::ifstream in(dir / "index.json");
  if (!in) throw IoError("cannot read trajectory index: " + (dir / "index.json").string());
  nlohmann::json index;
  in >> index;
  Trajectory traj;
  traj.times = index.at("times").get<std::vector<double>>();
  traj.step = index.at("step").get<double>();
  traj.kind = index.value("kind", std::string("latent")) == "probability"
                  ? TrajectoryKind::probability
                  : TrajectoryKind::latent;
  if (index.contains("dynamics")) traj.spec = index["dynamics"].get<DynamicsSpec>();
  for (const auto& name : index.at("files").get<std::vector<std::string>>())
    traj.states.push_back(read_matrix_csv(dir / name));
  return traj;
}

inline void write_trajectory_bundle(const std::filesystem::path& file, const Trajectory& traj) {
  nlohmann::json j;
  j["times"] = traj.times;
  j["step"] = traj.step;
  j["kind"] = traj.kind == TrajectoryKind::latent ? "latent" : "probability";
  if (traj.spec) j["dynamics"] = *traj.spec;
  nlohmann::json states = nlohmann::json::array();
  for (const Matrix& s : traj.states) states.push_back(matrix_to_json(s));
  j["states"] = states;
  std::ofstream out(file);
  if (!out) throw IoError("cannot write trajectory bundle: " + file.string());
  out << j.dump() << '\n';
}

inline Trajectory read_trajectory_bundle(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot read trajectory bundle: " + file.string());
  nlohmann::json j;
  in >> j;
  Trajectory traj;
  traj.times = j.at("times").get<std::vector<double>>();
  traj.step = j.at("step").get<double>();
  traj.kind = j.value("kind", std::string("latent")) == "probability" ? TrajectoryKind::probability
                                                                      : TrajectoryKind::latent;
  if (j.contains("dynamics")) traj.spec = j["dynamics"].get<DynamicsSpec>();
  for (const auto& s : j.at("states")) traj.states.push_back(matrix_from_json(s));
  return traj;
}

inline Trajectory read_trajectory_auto(const std::filesystem::path& path) {
  return std::filesystem::is_directory(path) ? read_trajectory_dir(path)
                                             : read_trajectory_bundle(path);
}

// --- Embedding series: per-time CSVs + JSON index --------------------------

inline void write_series_dir(const std::filesystem::path& dir, const EmbeddingSeries& series,
                             const std::vector<std::uint64_t>& seeds = {}) {
  std::filesystem::create_directories(dir);
  nlohmann::json index;
  index["times"] = series.times;
  index["d"] = series.d;
  if (!seeds.empty()) index["seeds"] = seeds;
  std::vector<std::string> files;
  for (std::size_t t = 0; t < series.embeddings.size(); ++t) {
    const std::string name = indexed_name("embedding", t);
    write_matrix_csv(dir / name, series.embeddings[t]);
    files.push_back(name);
  }
  index["files"] = files;
  if (!series.gauges_applied.empty()) {
    nlohmann::json gs = nlohmann::json::array();
    for (const Matrix& g : series.gauges_applied) gs.push_back(matrix_to_json(g));
    index["gauges_applied"] = gs;
  }
  std::ofstream out(dir / "index.json");
  if (!out) throw IoError("cannot write series index");
  out << index.dump(2) << '\n';
}

inline EmbeddingSeries read_series_dir(const std::filesystem::path& dir) {
  std::ifstream in(dir / "index.json");
  if (!in) throw IoError("cannot read series index: " + (dir / "index.json").string());
  nlohmann::json index;
  in >> index;
  std::vector<Matrix> frames;
  for (const auto& name : index.at("files").get<std::vector<std::string>>())
    frames.push_back(read_matrix_csv(dir / name));
  EmbeddingSeries series = make_series(std::move(frames), index.at("times").get<std::vector<double>>());
  if (index.contains("gauges_applied"))
    for (const auto& g : index["gauges_applied"]) series.gauges_applied.push_back(matrix_from_json(g));
  return series;
}

// --- Reports ---------------------------------------------------------------

inline nlohmann::json alignment_report_to_json(const AlignmentReport& rep) {
  nlohmann::json j;
  j["method"] = rep.method;
  if (!rep.anchor_set.empty()) j["anchor_set"] = rep.anchor_set;
  nlohmann::json gs = nlohmann::json::array();
  for (const Matrix& g : rep.gauges) gs.push_back(matrix_to_json(g));
  j["gauges"] = gs;
  if (!rep.per_time_error.empty()) j["per_time_error"] = rep.per_time_error;
  return j;
}

inline nlohmann::json curvature_report_to_json(const CurvatureReport& rep) {
  nlohmann::json j;
  j["projected_commutator"] = matrix_to_json(rep.projected_comm);
  j["vertical_bracket_norm_sq"] = rep.vertical_bracket_norm_sq;
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& p : rep.per_pair) {
    pairs.push_back({{"iota", p.iota},
                     {"gamma", p.gamma},
                     {"lambda_iota", p.lambda_iota},
                     {"lambda_gamma", p.lambda_gamma},
                     {"contribution", p.contribution}});
  }
  j["per_pair"] = pairs;
  return j;
}

inline CsvTable curvature_pairs_table(const CurvatureReport& rep) {
  CsvTable table({"iota", "gamma", "lambda_iota", "lambda_gamma", "contribution"});
  for (const auto& p : rep.per_pair)
    table.add_row({std::to_string(p.iota), std::to_string(p.gamma), format_double(p.lambda_iota),
                   format_double(p.lambda_gamma), format_double(p.contribution)});
  return table;
}

inline nlohmann::json lyapunov_inversion_to_json(const LyapunovInversion& inv) {
  nlohmann::json j;
  j["range_range"] = matrix_to_json(inv.range_range);
  j["cross"] = matrix_to_json(inv.cross);
  j["null_null_free"] = inv.null_null_free;
  j["null_dim"] = inv.null_dim;
  j["determined_count"] = inv.determined_count();
  j["residual"] = inv.residual;
  return j;
}

inline nlohmann::json fisher_report_to_json(const FisherReport& rep) {
  nlohmann::json j;
  j["info_matrix"] = matrix_to_json(rep.info_matrix);
  j["crb_trace"] = rep.crb_trace;
  j["rank"] = rep.rank;
  j["weights_clipped"] = rep.weights_clipped;
  j["times"] = rep.times;
  return j;
}

inline CsvTable fisher_per_time_table(const FisherReport& rep) {
  const Index k = rep.info_matrix.rows();
  std::vector<std::string> cols{"t"};
  for (Index a = 0; a < k; ++a)
    for (Index b = a; b < k; ++b)
      cols.push_back("I_" + std::to_string(a) + std::to_string(b));
  CsvTable table(cols);
  for (std::size_t j = 0; j < rep.per_time.size(); ++j) {
    std::vector<std::string> row{format_double(rep.times[j])};
    for (Index a = 0; a < k; ++a)
      for (Index b = a; b < k; ++b) row.push_back(format_double(rep.per_time[j](a, b)));
    table.add_row(row);
  }
  return table;
}

inline CsvTable coefficient_table(const FieldRegression& reg) {
  CsvTable table({"term", "component", "value"});
  for (std::size_t f = 0; f < reg.powers.size(); ++f) {
    std::string term;
    for (Index c = 0; c < reg.dim; ++c) {
      const int e = reg.powers[f][static_cast<std::size_t>(c)];
      if (e == 0) continue;
      if (!term.empty()) term += "*";
      term += "x" + std::to_string(c);
      if (e > 1) term += "^" + std::to_string(e);
    }
    if (term.empty()) term = "1";
    for (Index c = 0; c < reg.coeffs.cols(); ++c)
      table.add_row({term, std::to_string(c), format_double(reg.coeffs(static_cast<Index>(f), c))});
  }
  return table;
}

}  // namespace rdpg
