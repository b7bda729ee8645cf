#include "prefsdm/pointprocess.hpp"

#include <cmath>
#include <limits>

#include "prefsdm/kernels.hpp"

namespace prefsdm {

void IntensityModelSpec::validate(const CovariateRaster& raster) const {
  if (beta.size() != raster.n_cov() + 1)
    throw ValidationError("intensity beta has " + std::to_string(beta.size()) +
                          " coefficients, expected intercept + " +
                          std::to_string(raster.n_cov()) + " covariates");
  const bool needs_eta = (kind == IntensityKind::lgcp_ii);
  if (needs_eta != eta.has_value())
    throw ValidationError(needs_eta ? "intensity model (ii) requires an eta field"
                                    : "intensity model (i) must not carry an eta field");
  if (eta && static_cast<int>(eta->size()) != raster.grid.n_cells())
    throw ValidationError("eta field length does not match the grid");
}

std::vector<double> log_intensity_at_cells(const IntensityModelSpec& spec,
                                           const CovariateRaster& raster) {
  spec.validate(raster);
  const int n = raster.grid.n_cells();
  const std::size_t p = raster.n_cov();
  std::vector<double> out(n, spec.beta[0]);
  const auto& ops = kernels::ops();
  for (int i = 0; i < n; ++i)
    out[i] += p ? ops.dot(raster.row(i).data(), spec.beta.data() + 1, p) : 0.0;
  if (spec.eta)
    for (int i = 0; i < n; ++i) out[i] += (*spec.eta)[i];
  return out;
}

double lgcp_grid_loglik_from_log_intensity(std::span<const double> log_lambda,
                                           std::span<const long> counts,
                                           std::span<const double> areas,
                                           const DegradationLayers* layers) {
  const std::size_t n = log_lambda.size();
  if (counts.size() != n || areas.size() != n)
    throw ValidationError("log-intensity/count/area length mismatch");
  std::vector<double> lambda(n);
  kernels::ops().exp_v(log_lambda.data(), lambda.data(), n);
  // fixed cell-index order keeps totals bit-stable
  double ll = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (counts[i] < 0) throw ValidationError("negative cell count");
    const double q = layers ? layers->q(static_cast<int>(i)) : 1.0;
    if (q == 0.0) {
      if (counts[i] > 0) return -std::numeric_limits<double>::infinity();
      continue;  // no support, no events
    }
    if (counts[i] > 0) ll += counts[i] * (log_lambda[i] + std::log(q));
    ll -= areas[i] * lambda[i] * q;
  }
  return ll;
}

double lgcp_grid_loglik(const IntensityModelSpec& spec, const CovariateRaster& raster,
                        std::span<const long> counts, const DegradationLayers* layers) {
  const auto log_lambda = log_intensity_at_cells(spec, raster);
  std::vector<double> areas(raster.grid.n_cells(), raster.grid.cell_area());
  if (layers && layers->n_cells() != raster.grid.n_cells())
    throw ValidationError("degradation layers do not match the grid");
  return lgcp_grid_loglik_from_log_intensity(log_lambda, counts, areas, layers);
}

double prob_at_least_one(const IntensityModelSpec& spec, const CovariateRaster& raster,
                         std::span<const int> cells) {
  if (cells.empty()) throw ValidationError("presence probability over an empty cell set");
  const auto log_lambda = log_intensity_at_cells(spec, raster);
  const double area = raster.grid.cell_area();
  double mass = 0.0;
  for (int c : cells) mass += area * std::exp(log_lambda[c]);
  return 1.0 - std::exp(-mass);
}

PresenceOnlyDataset simulate_point_pattern(const IntensityModelSpec& spec,
                                           const CovariateRaster& raster,
                                           const DegradationLayers* layers, Rng& rng) {
  const auto log_lambda = log_intensity_at_cells(spec, raster);
  const GridSpec& grid = raster.grid;
  PresenceOnlyDataset out;
  for (int c = 0; c < grid.n_cells(); ++c) {
    const double q = layers ? layers->q(c) : 1.0;
    const double mean = grid.cell_area() * std::exp(log_lambda[c]) * q;
    if (!std::isfinite(mean)) throw NumericalError("non-finite cell intensity in simulation");
    const long m = rng.poisson(mean);
    const auto [row, col] = grid.row_col(c);
    for (long e = 0; e < m; ++e) {
      const double x = grid.origin.x + (col + rng.uniform()) * grid.cell_w;
      const double y = grid.origin.y + (row + rng.uniform()) * grid.cell_h;
      out.events.push_back({x, y});
    }
  }
  return out;
}

}  // namespace prefsdm
