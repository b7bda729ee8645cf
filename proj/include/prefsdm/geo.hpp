#pragma once

#include <cmath>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "prefsdm/errors.hpp"

namespace prefsdm {

/// Planar coordinates in 10-km units (eastings/northings rescaled).
struct Location {
  double x = 0.0;
  double y = 0.0;
};

inline double distance(const Location& a, const Location& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return std::sqrt(dx * dx + dy * dy);
}

/// Regular grid tiling the study region. Cells are half-open along each
/// axis; points on the far boundary of the region fold into the last
/// row/column so that the tiling is exhaustive and bijective.
struct GridSpec {
  Location origin;
  double cell_w = 1.0;
  double cell_h = 1.0;
  int n_cols = 1;
  int n_rows = 1;

  void validate() const;

  int n_cells() const { return n_cols * n_rows; }
  double cell_area() const { return cell_w * cell_h; }
  double x_max() const { return origin.x + n_cols * cell_w; }
  double y_max() const { return origin.y + n_rows * cell_h; }

  int cell_index(int row, int col) const { return row * n_cols + col; }
  std::pair<int, int> row_col(int cell) const { return {cell / n_cols, cell % n_cols}; }

  Location centroid(int cell) const {
    const auto [r, c] = row_col(cell);
    return {origin.x + (c + 0.5) * cell_w, origin.y + (r + 0.5) * cell_h};
  }

  bool contains(const Location& s) const {
    return s.x >= origin.x && s.x <= x_max() && s.y >= origin.y && s.y <= y_max();
  }
};

/// Cell containing `s`. Boundary points go to the higher-index cell along
/// each axis except on the far region edge, which folds in. Throws
/// ValidationError for out-of-region points.
int cell_of(const Location& s, const GridSpec& grid);

/// Per-cell standardized covariate surfaces; `values` is cell-major with
/// one row of `names.size()` entries per cell.
struct CovariateRaster {
  GridSpec grid;
  std::vector<std::string> names;
  std::vector<double> values;
  // (mean, sd) recorded when standardize_covariates ran; empty before
  std::vector<std::pair<double, double>> standardization;

  std::size_t n_cov() const { return names.size(); }
  double value(int cell, std::size_t cov) const { return values[cell * names.size() + cov]; }
  std::span<const double> row(int cell) const {
    return {values.data() + static_cast<std::size_t>(cell) * names.size(), names.size()};
  }
  void validate() const;
};

/// Column-wise (value - mean) / sd using the sample (n-1) standard
/// deviation; the stats are recorded for inverse mapping. Zero-variance
/// columns raise ValidationError naming the column.
CovariateRaster standardize_covariates(const CovariateRaster& raster);

struct PaSite {
  std::string id;
  Location loc;
  int y = 0;  // response in {0,1}
};

/// Fixed survey sites with binary responses.
struct PresenceAbsenceDataset {
  std::vector<PaSite> sites;
  std::string species;

  std::size_t size() const { return sites.size(); }
};

/// Random event locations (a partially observed point pattern).
struct PresenceOnlyDataset {
  std::vector<Location> events;
  std::string species;

  std::size_t size() const { return events.size(); }
};

struct IngestReport {
  std::size_t dropped_out_of_region = 0;
  std::size_t dropped_duplicate = 0;
  std::size_t kept = 0;
};

/// Parse `id,x,y,y01` records (header row required) into a PA dataset.
/// Out-of-region rows and rows duplicating an earlier id or coordinate
/// pair are dropped and counted. Coordinates are multiplied by
/// `coord_scale` before the containment test (e.g. 0.1 for km inputs).
PresenceAbsenceDataset ingest_presence_absence(std::istream& rows, const GridSpec& region,
                                               IngestReport* report = nullptr,
                                               double coord_scale = 1.0,
                                               const std::string& species = "");

/// Parse `id,x,y` records into a PO dataset; duplicated coordinates and
/// out-of-region points are dropped and counted.
PresenceOnlyDataset ingest_presence_only(std::istream& rows, const GridSpec& region,
                                         IngestReport* report = nullptr, double coord_scale = 1.0,
                                         const std::string& species = "");

struct CellCounts {
  std::vector<long> counts;
  long n_empty = 0;  // number of cells with zero points
  long total() const;
};

CellCounts counts_per_cell(std::span<const Location> points, const GridSpec& grid);

/// Area-weighted mean of per-cell values over the cell subset `cells`.
/// With 0/1 surfaces this is the realized block average; with probability
/// surfaces it is the expected block average.
double block_average(std::span<const double> values, std::span<const double> areas,
                     std::span<const int> cells);

/// Uniform-area convenience overload on a full grid subset.
double block_average(std::span<const double> values, const GridSpec& grid,
                     std::span<const int> cells);

/// Per-cell availability u, conditional sampling probability p and their
/// product q = u*p. q is recomputed from (u, p) on every construction path
/// so the identity holds exactly.
class DegradationLayers {
public:
  DegradationLayers(std::vector<double> u, std::vector<double> p);

  /// All-available, all-sampled layers (q identically 1).
  static DegradationLayers all_ones(int n_cells);

  /// u = 1 everywhere; p_i = 1 exactly when cell i holds at least one
  /// event of the supplied pattern(s), else 0.
  static DegradationLayers from_effort(const CellCounts& pooled_events);

  int n_cells() const { return static_cast<int>(u_.size()); }
  double u(int cell) const { return u_[cell]; }
  double p(int cell) const { return p_[cell]; }
  double q(int cell) const { return q_[cell]; }
  std::span<const double> q() const { return q_; }

private:
  std::vector<double> u_, p_, q_;
};

}  // namespace prefsdm
