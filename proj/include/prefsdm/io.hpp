#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "prefsdm/geo.hpp"

namespace prefsdm {

/// Round-trip exact decimal rendering for doubles (shortest form that
/// parses back to the same value); keeps emitted files deterministic.
std::string format_double(double v);

/// FNV-1a over the file bytes; recorded in run manifests.
std::uint64_t fnv1a_file(const std::string& path);

/// Flat key=value configuration; `[section]` headers prefix keys as
/// "section.key". Later assignments win, so CLI flags can be layered on
/// top of file values.
class Config {
public:
  static Config from_file(const std::string& path);
  static Config from_string(const std::string& text);

  bool has(const std::string& key) const;
  std::string get(const std::string& key, const std::string& fallback = "") const;
  double get_double(const std::string& key, double fallback) const;
  long get_long(const std::string& key, long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  void set(const std::string& key, const std::string& value);

  const std::map<std::string, std::string>& entries() const { return entries_; }
  void write(const std::string& path) const;

private:
  std::map<std::string, std::string> entries_;
};

// ---------------------------------------------------------------- points
PresenceAbsenceDataset read_pa_csv(const std::string& path, const GridSpec& region,
                                   IngestReport* report = nullptr, double coord_scale = 1.0);
PresenceOnlyDataset read_po_csv(const std::string& path, const GridSpec& region,
                                IngestReport* report = nullptr, double coord_scale = 1.0);
void write_pa_csv(const std::string& path, const PresenceAbsenceDataset& data);
void write_po_csv(const std::string& path, const PresenceOnlyDataset& data);

// ---------------------------------------------------------------- raster
/// `cell,row,col,cx,cy,<covariate names...>`; the grid geometry is
/// inferred from the centroids and validated for completeness.
CovariateRaster read_raster_csv(const std::string& path);
void write_raster_csv(const std::string& path, const CovariateRaster& raster);

// ----------------------------------------------------------- degradation
/// `cell,u,p`; cells missing from the file default to u = p = 1.
DegradationLayers read_degradation_csv(const std::string& path, int n_cells);
void write_degradation_csv(const std::string& path, const DegradationLayers& layers);

// ------------------------------------------------------------- plumbing
void ensure_directory(const std::string& dir);
std::string join_path(const std::string& dir, const std::string& name);
bool files_identical(const std::string& a, const std::string& b);

}  // namespace prefsdm
