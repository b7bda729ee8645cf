#include "prefsdm/geo.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace prefsdm {

void GridSpec::validate() const {
  if (!(cell_w > 0.0) || !(cell_h > 0.0))
    throw ValidationError("grid cell dimensions must be strictly positive");
  if (n_cols < 1 || n_rows < 1) throw ValidationError("grid must have at least one row and column");
  if (!std::isfinite(origin.x) || !std::isfinite(origin.y))
    throw ValidationError("grid origin must be finite");
}

int cell_of(const Location& s, const GridSpec& grid) {
  if (!grid.contains(s)) {
    std::ostringstream msg;
    msg << "location (" << s.x << ", " << s.y << ") outside study region";
    throw ValidationError(msg.str());
  }
  int col = static_cast<int>(std::floor((s.x - grid.origin.x) / grid.cell_w));
  int row = static_cast<int>(std::floor((s.y - grid.origin.y) / grid.cell_h));
  // far boundary folds into the last row/column
  col = std::min(col, grid.n_cols - 1);
  row = std::min(row, grid.n_rows - 1);
  return grid.cell_index(row, col);
}

void CovariateRaster::validate() const {
  grid.validate();
  const std::size_t expect = static_cast<std::size_t>(grid.n_cells()) * names.size();
  if (values.size() != expect)
    throw ValidationError("raster holds " + std::to_string(values.size()) + " values, expected " +
                          std::to_string(expect));
  for (double v : values)
    if (!std::isfinite(v)) throw ValidationError("raster contains a non-finite covariate value");
}

CovariateRaster standardize_covariates(const CovariateRaster& raster) {
  raster.validate();
  CovariateRaster out = raster;
  const int n = raster.grid.n_cells();
  const std::size_t p = raster.names.size();
  out.standardization.assign(p, {0.0, 1.0});
  for (std::size_t j = 0; j < p; ++j) {
    double mean = 0.0;
    for (int i = 0; i < n; ++i) mean += raster.value(i, j);
    mean /= n;
    double ss = 0.0;
    for (int i = 0; i < n; ++i) {
      const double d = raster.value(i, j) - mean;
      ss += d * d;
    }
    if (n < 2 || ss <= 0.0)
      throw ValidationError("covariate '" + raster.names[j] + "' has zero variance");
    const double sd = std::sqrt(ss / (n - 1));
    for (int i = 0; i < n; ++i)
      out.values[i * p + j] = (raster.value(i, j) - mean) / sd;
    out.standardization[j] = {mean, sd};
  }
  return out;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) {
    // trim surrounding whitespace
    const auto b = field.find_first_not_of(" \t\r");
    const auto e = field.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? "" : field.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

double parse_double(const std::string& s, const char* what, long line) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    if (!std::isfinite(v)) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError(std::string("cannot parse ") + what + " from '" + s + "'", line);
  }
}

struct PointRow {
  std::string id;
  Location loc;
  int y = -1;  // -1 when absent
};

// Shared reader for the `id,x,y[,y01]` point format.
std::vector<PointRow> read_point_rows(std::istream& in, bool want_response, double coord_scale) {
  std::vector<PointRow> rows;
  std::string line;
  long lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {  // header row is required and skipped
      header_seen = true;
      continue;
    }
    const auto fields = split_csv(line);
    if (fields.size() < 3 || (want_response && fields.size() < 4))
      throw ParseError("expected columns id,x,y" + std::string(want_response ? ",y01" : ""),
                       lineno);
    PointRow row;
    row.id = fields[0];
    row.loc.x = parse_double(fields[1], "x", lineno) * coord_scale;
    row.loc.y = parse_double(fields[2], "y", lineno) * coord_scale;
    if (want_response) {
      const double y = parse_double(fields[3], "response", lineno);
      if (y != 0.0 && y != 1.0)
        throw ValidationError("response must be 0 or 1 (line " + std::to_string(lineno) + ")");
      row.y = static_cast<int>(y);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

PresenceAbsenceDataset ingest_presence_absence(std::istream& in, const GridSpec& region,
                                               IngestReport* report, double coord_scale,
                                               const std::string& species) {
  region.validate();
  IngestReport rep;
  PresenceAbsenceDataset out;
  out.species = species;
  std::set<std::string> seen_ids;
  std::set<std::pair<double, double>> seen_coords;
  for (auto& row : read_point_rows(in, /*want_response=*/true, coord_scale)) {
    if (!region.contains(row.loc)) {
      ++rep.dropped_out_of_region;
      continue;
    }
    if (!seen_ids.insert(row.id).second ||
        !seen_coords.insert({row.loc.x, row.loc.y}).second) {
      ++rep.dropped_duplicate;
      continue;
    }
    out.sites.push_back({std::move(row.id), row.loc, row.y});
  }
  rep.kept = out.sites.size();
  if (report) *report = rep;
  return out;
}

PresenceOnlyDataset ingest_presence_only(std::istream& in, const GridSpec& region,
                                         IngestReport* report, double coord_scale,
                                         const std::string& species) {
  region.validate();
  IngestReport rep;
  PresenceOnlyDataset out;
  out.species = species;
  std::set<std::pair<double, double>> seen;
  for (auto& row : read_point_rows(in, /*want_response=*/false, coord_scale)) {
    if (!region.contains(row.loc)) {
      ++rep.dropped_out_of_region;
      continue;
    }
    if (!seen.insert({row.loc.x, row.loc.y}).second) {
      ++rep.dropped_duplicate;
      continue;
    }
    out.events.push_back(row.loc);
  }
  rep.kept = out.events.size();
  if (report) *report = rep;
  return out;
}

long CellCounts::total() const { return std::accumulate(counts.begin(), counts.end(), 0L); }

CellCounts counts_per_cell(std::span<const Location> points, const GridSpec& grid) {
  grid.validate();
  CellCounts out;
  out.counts.assign(grid.n_cells(), 0);
  for (const auto& s : points) ++out.counts[cell_of(s, grid)];
  out.n_empty = std::count(out.counts.begin(), out.counts.end(), 0L);
  return out;
}

double block_average(std::span<const double> values, std::span<const double> areas,
                     std::span<const int> cells) {
  if (cells.empty()) throw ValidationError("block average over an empty cell set");
  double num = 0.0, den = 0.0;
  for (int c : cells) {
    if (c < 0 || static_cast<std::size_t>(c) >= values.size())
      throw ValidationError("block average cell index out of range");
    num += areas[c] * values[c];
    den += areas[c];
  }
  return num / den;
}

double block_average(std::span<const double> values, const GridSpec& grid,
                     std::span<const int> cells) {
  std::vector<double> areas(grid.n_cells(), grid.cell_area());
  return block_average(values, areas, cells);
}

DegradationLayers::DegradationLayers(std::vector<double> u, std::vector<double> p)
    : u_(std::move(u)), p_(std::move(p)) {
  if (u_.size() != p_.size()) throw ValidationError("degradation layers u and p differ in length");
  q_.resize(u_.size());
  for (std::size_t i = 0; i < u_.size(); ++i) {
    if (!(u_[i] >= 0.0 && u_[i] <= 1.0) || !(p_[i] >= 0.0 && p_[i] <= 1.0))
      throw ValidationError("degradation values must lie in [0,1] (cell " + std::to_string(i) +
                            ")");
    q_[i] = u_[i] * p_[i];
  }
}

DegradationLayers DegradationLayers::all_ones(int n_cells) {
  return DegradationLayers(std::vector<double>(n_cells, 1.0), std::vector<double>(n_cells, 1.0));
}

DegradationLayers DegradationLayers::from_effort(const CellCounts& pooled_events) {
  std::vector<double> u(pooled_events.counts.size(), 1.0);
  std::vector<double> p(pooled_events.counts.size(), 0.0);
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = pooled_events.counts[i] > 0 ? 1.0 : 0.0;
  return DegradationLayers(std::move(u), std::move(p));
}

}  // namespace prefsdm
