#pragma once

#include <optional>
#include <span>
#include <vector>

#include "prefsdm/geo.hpp"
#include "prefsdm/gp.hpp"
#include "prefsdm/rng.hpp"

namespace prefsdm {

enum class IntensityKind {
  nhpp_i,   // log lambda(s) = w(s)'beta
  lgcp_ii,  // log lambda(s) = w(s)'beta + eta(s)
};

/// One intensity model over the grid. `beta` holds the intercept followed
/// by one coefficient per raster covariate. `eta` (per-cell values) is
/// present exactly when kind == lgcp_ii.
struct IntensityModelSpec {
  IntensityKind kind = IntensityKind::nhpp_i;
  std::vector<double> beta;
  std::optional<std::vector<double>> eta;  // per-cell field values
  ExpCovParams eta_params;

  void validate(const CovariateRaster& raster) const;
};

/// Per-cell log intensity: intercept + w_i . beta[1..] + eta_i, with the
/// intensity evaluated at cell centroids.
std::vector<double> log_intensity_at_cells(const IntensityModelSpec& spec,
                                           const CovariateRaster& raster);

/// Grid-approximated Poisson/LGCP log likelihood
///     sum_i [ n_i log(lambda_i q_i) - |A_i| lambda_i q_i ]
/// with q from `layers` (all ones when absent). The -sum log(n_i!) data
/// constant is omitted. Cells with q_i = 0 contribute 0 when empty;
/// observed events on a q_i = 0 cell return -infinity as an explicit
/// impossible-data marker rather than throwing.
double lgcp_grid_loglik(const IntensityModelSpec& spec, const CovariateRaster& raster,
                        std::span<const long> counts, const DegradationLayers* layers = nullptr);

/// Same likelihood evaluated from a precomputed log-intensity vector
/// (sampler hot path).
double lgcp_grid_loglik_from_log_intensity(std::span<const double> log_lambda,
                                           std::span<const long> counts,
                                           std::span<const double> areas,
                                           const DegradationLayers* layers = nullptr);

/// P(N(A) >= 1) = 1 - exp(-sum_{i in A} |A_i| lambda_i) for the potential
/// (undegraded) intensity.
double prob_at_least_one(const IntensityModelSpec& spec, const CovariateRaster& raster,
                         std::span<const int> cells);

/// Simulate the (degraded) point pattern on the grid: per-cell
/// Poisson(|A_i| lambda_i q_i) counts with events placed uniformly within
/// their cell. Deterministic given the rng state.
PresenceOnlyDataset simulate_point_pattern(const IntensityModelSpec& spec,
                                           const CovariateRaster& raster,
                                           const DegradationLayers* layers, Rng& rng);

}  // namespace prefsdm
