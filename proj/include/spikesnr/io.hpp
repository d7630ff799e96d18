#pragma once

// Plot-ready CSV series with JSON sidecars, and the small CSV formats used
// for weights and traces. CSV output uses CRLF line endings (RFC 4180).

#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "spikesnr/core.hpp"

namespace spikesnr::io {

inline constexpr int kSchemaVersion = 1;

struct Column {
  std::string name;
  std::string unit; // empty for dimensionless
};

struct Series {
  std::string name;
  std::string description;
  std::vector<Column> columns;
  std::vector<std::vector<double>> rows;
};

inline std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  return os;
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  auto os = open_output(path);
  os << j.dump(2) << '\n';
  if (!os) throw IoError("write failed: " + path.string());
}

// Writes <dir>/<name>.csv and <dir>/<name>.json (column names, units, row
// count, description).
inline std::filesystem::path emit_plot_data(const Series& s, const std::filesystem::path& dir) {
  if (s.rows.empty()) throw Error("emit_plot_data: series '" + s.name + "' is empty");
  if (s.columns.empty()) throw Error("emit_plot_data: series '" + s.name + "' has no columns");

  const auto csv_path = dir / (s.name + ".csv");
  {
    auto os = open_output(csv_path);
    for (std::size_t c = 0; c < s.columns.size(); ++c) os << (c ? "," : "") << s.columns[c].name;
    os << "\r\n";
    for (const auto& row : s.rows) {
      if (row.size() != s.columns.size()) throw Error("emit_plot_data: ragged row in '" + s.name + "'");
      for (std::size_t c = 0; c < row.size(); ++c) os << (c ? "," : "") << format_double(row[c]);
      os << "\r\n";
    }
    if (!os) throw IoError("write failed: " + csv_path.string());
  }

  nlohmann::json meta;
  meta["schema_version"] = kSchemaVersion;
  meta["series"] = s.name;
  meta["description"] = s.description;
  meta["file"] = csv_path.filename().string();
  meta["rows"] = s.rows.size();
  for (const auto& c : s.columns) meta["columns"].push_back({{"name", c.name}, {"unit", c.unit}});
  write_json(dir / (s.name + ".json"), meta);
  return csv_path;
}

inline void write_weights_csv(const std::filesystem::path& path, std::span<const double> weights) {
  auto os = open_output(path);
  os << "afferent_id,weight\r\n";
  for (std::size_t i = 0; i < weights.size(); ++i) os << i << ',' << format_double(weights[i]) << "\r\n";
}

inline std::vector<double> read_weights_csv(const std::filesystem::path& path, std::size_t afferent_count) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::string line;
  std::getline(is, line);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "afferent_id,weight") throw IoError("weights csv: unexpected header '" + line + "'");
  std::vector<double> w(afferent_count, 0.0);
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw IoError("weights csv: malformed row");
    const std::size_t id = std::stoul(line.substr(0, comma));
    if (id >= afferent_count) throw IoError("weights csv: afferent id out of range");
    w[id] = std::stod(line.substr(comma + 1));
  }
  return w;
}

inline void write_pairs_csv(const std::filesystem::path& path, const std::string& header,
                            std::span<const std::pair<double, double>> rows) {
  auto os = open_output(path);
  os << header << "\r\n";
  for (const auto& [a, b] : rows) os << format_double(a) << ',' << format_double(b) << "\r\n";
}

} // namespace spikesnr::io
