#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "rdpg/errors.hpp"
#include "rdpg/types.hpp"

namespace rdpg {

// Shortest round-trip decimal representation.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
  double v = 0.0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  while (begin != end && (*begin == ' ' || *begin == '\t')) ++begin;
  const auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc()) throw IoError("cannot parse number: '" + std::string(s) + "'");
  return v;
}

// CSV: rows = matrix rows, comma-separated, no header.
inline void write_matrix_csv(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << format_double(m(i, j));
    }
    out << '\n';
  }
}

inline Matrix read_matrix_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::size_t pos = 0;
    while (pos <= line.size()) {
      std::size_t comma = line.find(',', pos);
      if (comma == std::string::npos) comma = line.size();
      row.push_back(parse_double(std::string_view(line).substr(pos, comma - pos)));
      pos = comma + 1;
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw IoError("ragged CSV: " + path.string());
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError("empty CSV: " + path.string());
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) m(i, j) = rows[i][j];
  return m;
}

// Self-describing JSON wrapper {n, d, entries: row-major}.
inline void write_matrix_json(const std::filesystem::path& path, const Matrix& m) {
  nlohmann::json j;
  j["n"] = m.rows();
  j["d"] = m.cols();
  std::vector<double> entries;
  entries.reserve(static_cast<std::size_t>(m.size()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index c = 0; c < m.cols(); ++c) entries.push_back(m(i, c));
  j["entries"] = entries;
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << j.dump(2) << '\n';
}

inline Matrix read_matrix_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  nlohmann::json j;
  in >> j;
  const Index n = j.at("n").get<Index>();
  const Index d = j.at("d").get<Index>();
  const auto entries = j.at("entries").get<std::vector<double>>();
  if (static_cast<Index>(entries.size()) != n * d)
    throw IoError("entry count does not match n*d: " + path.string());
  Matrix m(n, d);
  for (Index i = 0; i < n; ++i)
    for (Index c = 0; c < d; ++c) m(i, c) = entries[static_cast<std::size_t>(i * d + c)];
  return m;
}

inline Matrix read_matrix_auto(const std::filesystem::path& path) {
  return path.extension() == ".json" ? read_matrix_json(path) : read_matrix_csv(path);
}

// Buffered CSV emitter with a schema header row. write_with_sidecar also
// drops a <name>.meta.json next to the data file carrying the config
// snapshot and library version.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> columns) : columns_(std::move(columns)) {}

  void add_row(const std::vector<std::string>& cells) {
    if (cells.size() != columns_.size()) throw IoError("CSV row width mismatch");
    rows_.push_back(cells);
  }

  std::size_t row_count() const { return rows_.size(); }
  const std::vector<std::string>& columns() const { return columns_; }

  std::string to_string() const {
    std::ostringstream out;
    for (std::size_t j = 0; j < columns_.size(); ++j) {
      if (j) out << ',';
      out << columns_[j];
    }
    out << '\n';
    for (const auto& row : rows_) {
      for (std::size_t j = 0; j < row.size(); ++j) {
        if (j) out << ',';
        out << row[j];
      }
      out << '\n';
    }
    return out.str();
  }

  void write(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << to_string();
  }

  void write_with_sidecar(const std::filesystem::path& path,
                          const nlohmann::json& config_snapshot) const {
    write(path);
    nlohmann::json meta;
    meta["columns"] = columns_;
    meta["config"] = config_snapshot;
    meta["version"] = kVersion;
    std::filesystem::path side = path;
    side += ".meta.json";
    std::ofstream out(side);
    if (!out) throw IoError("cannot open for writing: " + side.string());
    out << meta.dump(2) << '\n';
  }

 private:
  std::vector<std::string> columns_;
  std::vector<std::vector<std::string>> rows_;
};

}  // namespace rdpg
