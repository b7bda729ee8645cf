#include "prefsdm/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace prefsdm {

std::string format_double(double v) {
  // shortest representation that round-trips
  char buf[64];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

std::uint64_t fnv1a_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file for hashing: " + path);
  std::uint64_t h = 1469598103934665603ULL;
  char buf[4096];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
    if (in.eof()) break;
  }
  return h;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

Config Config::from_string(const std::string& text) {
  Config cfg;
  std::istringstream in(text);
  std::string line, section;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[' && line.back() == ']') {
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError("expected key=value in config", lineno);
    std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ParseError("empty config key", lineno);
    if (!section.empty()) key = section + "." + key;
    cfg.entries_[key] = trim(line.substr(eq + 1));
  }
  return cfg;
}

Config Config::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_string(ss.str());
}

bool Config::has(const std::string& key) const { return entries_.count(key) > 0; }

std::string Config::get(const std::string& key, const std::string& fallback) const {
  const auto it = entries_.find(key);
  return it == entries_.end() ? fallback : it->second;
}

double Config::get_double(const std::string& key, double fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  try {
    return std::stod(it->second);
  } catch (const std::exception&) {
    throw ValidationError("config key '" + key + "' is not a number: " + it->second);
  }
}

long Config::get_long(const std::string& key, long fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  try {
    return std::stol(it->second);
  } catch (const std::exception&) {
    throw ValidationError("config key '" + key + "' is not an integer: " + it->second);
  }
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  const std::string& v = it->second;
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ValidationError("config key '" + key + "' is not a boolean: " + v);
}

void Config::set(const std::string& key, const std::string& value) { entries_[key] = value; }

void Config::write(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config file: " + path);
  for (const auto& [k, v] : entries_) out << k << "=" << v << "\n";
}

// ---------------------------------------------------------------- points

namespace {

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open input file: " + path);
  return in;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write output file: " + path);
  return out;
}

}  // namespace

PresenceAbsenceDataset read_pa_csv(const std::string& path, const GridSpec& region,
                                   IngestReport* report, double coord_scale) {
  auto in = open_input(path);
  return ingest_presence_absence(in, region, report, coord_scale,
                                 std::filesystem::path(path).stem().string());
}

PresenceOnlyDataset read_po_csv(const std::string& path, const GridSpec& region,
                                IngestReport* report, double coord_scale) {
  auto in = open_input(path);
  return ingest_presence_only(in, region, report, coord_scale,
                              std::filesystem::path(path).stem().string());
}

void write_pa_csv(const std::string& path, const PresenceAbsenceDataset& data) {
  auto out = open_output(path);
  out << "id,x,y,y01\n";
  for (const auto& s : data.sites)
    out << s.id << "," << format_double(s.loc.x) << "," << format_double(s.loc.y) << "," << s.y
        << "\n";
}

void write_po_csv(const std::string& path, const PresenceOnlyDataset& data) {
  auto out = open_output(path);
  out << "id,x,y\n";
  for (std::size_t i = 0; i < data.events.size(); ++i)
    out << i << "," << format_double(data.events[i].x) << "," << format_double(data.events[i].y)
        << "\n";
}

// ---------------------------------------------------------------- raster

CovariateRaster read_raster_csv(const std::string& path) {
  auto in = open_input(path);
  std::string line;
  long lineno = 0;
  if (!std::getline(in, line)) throw IoError("raster file is empty: " + path);
  ++lineno;
  std::vector<std::string> header;
  {
    std::istringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) header.push_back(trim(f));
  }
  if (header.size() < 5 || header[0] != "cell" || header[1] != "row" || header[2] != "col" ||
      header[3] != "cx" || header[4] != "cy")
    throw ValidationError("raster header must start with cell,row,col,cx,cy: " + path);
  const std::size_t ncov = header.size() - 5;

  struct Row {
    int cell, row, col;
    double cx, cy;
    std::vector<double> cov;
  };
  std::vector<Row> rows;
  int max_row = -1, max_col = -1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::istringstream ss(line);
    std::string f;
    std::vector<std::string> fields;
    while (std::getline(ss, f, ',')) fields.push_back(trim(f));
    if (fields.size() != header.size())
      throw ParseError("raster row has " + std::to_string(fields.size()) + " fields, expected " +
                           std::to_string(header.size()),
                       lineno);
    Row r;
    try {
      r.cell = std::stoi(fields[0]);
      r.row = std::stoi(fields[1]);
      r.col = std::stoi(fields[2]);
      r.cx = std::stod(fields[3]);
      r.cy = std::stod(fields[4]);
      for (std::size_t j = 0; j < ncov; ++j) r.cov.push_back(std::stod(fields[5 + j]));
    } catch (const std::exception&) {
      throw ParseError("cannot parse raster row", lineno);
    }
    max_row = std::max(max_row, r.row);
    max_col = std::max(max_col, r.col);
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw ValidationError("raster file has no cells: " + path);

  GridSpec grid;
  grid.n_rows = max_row + 1;
  grid.n_cols = max_col + 1;
  if (static_cast<int>(rows.size()) != grid.n_cells())
    throw ValidationError("raster does not cover the full grid: " + std::to_string(rows.size()) +
                          " rows for " + std::to_string(grid.n_cells()) + " cells");

  // infer cell size and origin from the centroid lattice
  double min_cx = rows[0].cx, max_cx = rows[0].cx, min_cy = rows[0].cy, max_cy = rows[0].cy;
  for (const auto& r : rows) {
    min_cx = std::min(min_cx, r.cx);
    max_cx = std::max(max_cx, r.cx);
    min_cy = std::min(min_cy, r.cy);
    max_cy = std::max(max_cy, r.cy);
  }
  grid.cell_w = grid.n_cols > 1 ? (max_cx - min_cx) / (grid.n_cols - 1) : 1.0;
  grid.cell_h = grid.n_rows > 1 ? (max_cy - min_cy) / (grid.n_rows - 1) : 1.0;
  if (!(grid.cell_w > 0.0) || !(grid.cell_h > 0.0))
    throw ValidationError("raster centroids do not form a positive-size lattice");
  grid.origin = {min_cx - 0.5 * grid.cell_w, min_cy - 0.5 * grid.cell_h};

  CovariateRaster raster;
  raster.grid = grid;
  raster.names.assign(header.begin() + 5, header.end());
  raster.values.assign(static_cast<std::size_t>(grid.n_cells()) * ncov, 0.0);
  std::vector<char> seen(grid.n_cells(), 0);
  for (const auto& r : rows) {
    if (r.cell != grid.cell_index(r.row, r.col))
      throw ValidationError("raster cell " + std::to_string(r.cell) +
                            " does not match row-major index of (row,col)");
    if (seen[r.cell]) throw ValidationError("raster repeats cell " + std::to_string(r.cell));
    seen[r.cell] = 1;
    for (std::size_t j = 0; j < ncov; ++j) raster.values[r.cell * ncov + j] = r.cov[j];
  }
  raster.validate();
  return raster;
}

void write_raster_csv(const std::string& path, const CovariateRaster& raster) {
  auto out = open_output(path);
  out << "cell,row,col,cx,cy";
  for (const auto& n : raster.names) out << "," << n;
  out << "\n";
  for (int c = 0; c < raster.grid.n_cells(); ++c) {
    const auto [row, col] = raster.grid.row_col(c);
    const Location cen = raster.grid.centroid(c);
    out << c << "," << row << "," << col << "," << format_double(cen.x) << ","
        << format_double(cen.y);
    for (std::size_t j = 0; j < raster.n_cov(); ++j)
      out << "," << format_double(raster.value(c, j));
    out << "\n";
  }
}

// ----------------------------------------------------------- degradation

DegradationLayers read_degradation_csv(const std::string& path, int n_cells) {
  auto in = open_input(path);
  std::vector<double> u(n_cells, 1.0), p(n_cells, 1.0);
  std::string line;
  long lineno = 0;
  bool header = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    std::istringstream ss(line);
    std::string f;
    std::vector<std::string> fields;
    while (std::getline(ss, f, ',')) fields.push_back(trim(f));
    if (fields.size() != 3) throw ParseError("expected cell,u,p", lineno);
    try {
      const int cell = std::stoi(fields[0]);
      if (cell < 0 || cell >= n_cells)
        throw ValidationError("degradation cell " + fields[0] + " out of range");
      u[cell] = std::stod(fields[1]);
      p[cell] = std::stod(fields[2]);
    } catch (const ValidationError&) {
      throw;
    } catch (const std::exception&) {
      throw ParseError("cannot parse degradation row", lineno);
    }
  }
  return DegradationLayers(std::move(u), std::move(p));
}

void write_degradation_csv(const std::string& path, const DegradationLayers& layers) {
  auto out = open_output(path);
  out << "cell,u,p\n";
  for (int c = 0; c < layers.n_cells(); ++c)
    out << c << "," << format_double(layers.u(c)) << "," << format_double(layers.p(c)) << "\n";
}

// ------------------------------------------------------------- plumbing

void ensure_directory(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
}

std::string join_path(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

bool files_identical(const std::string& a, const std::string& b) {
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  if (!fa || !fb) throw IoError("cannot open files for comparison");
  std::ostringstream sa, sb;
  sa << fa.rdbuf();
  sb << fb.rdbuf();
  return sa.str() == sb.str();
}

}  // namespace prefsdm
