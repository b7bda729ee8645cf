#pragma once

#include <string>
#include <utility>
#include <vector>

#include "prefsdm/geo.hpp"
#include "prefsdm/mcmc.hpp"
#include "prefsdm/rng.hpp"

namespace prefsdm {

struct PredictionSurface {
  GridSpec grid;
  std::vector<double> mean, lower, upper;  // per cell, 2.5% / 97.5%
};

/// Per-field-draw presence probabilities at arbitrary in-region targets:
/// for each stored field draw, compose the linear predictor (eta read at
/// the containing cell, omega kriged to the target and drawn from its
/// predictive conditional) and map through the probit link. Rows align
/// with archive.field_draw_indices.
std::vector<std::vector<double>> predict_p_draws(const PosteriorArchive& archive,
                                                 const CovariateRaster& raster,
                                                 std::span<const Location> targets, Rng& rng);

/// Posterior mean and 95% band of p(s) at every cell centroid.
PredictionSurface predict_surface(const PosteriorArchive& archive, const CovariateRaster& raster,
                                  Rng& rng);

void write_surface_csv(const std::string& path, const PredictionSurface& surface);

struct TjurResult {
  double mean = 0.0;
  double lo = 0.0, hi = 0.0;  // 2.5% / 97.5% over draws
};

/// Draw-wise Tjur discrimination: mean presence probability at observed
/// ones minus mean at observed zeros, summarized over posterior draws.
/// Both classes must be present.
TjurResult tjur_r2(const std::vector<std::vector<double>>& p_draws, std::span<const int> y);

enum class HoldoutRounding { nearest, down, up };

/// Seed-deterministic disjoint exhaustive split; the test set gets
/// round(fraction * n) sites under the chosen rounding rule.
std::pair<PresenceAbsenceDataset, PresenceAbsenceDataset> holdout_split(
    const PresenceAbsenceDataset& data, double fraction, std::uint64_t seed,
    HoldoutRounding rounding = HoldoutRounding::nearest);

struct ModelComparison {
  struct Row {
    std::string model;
    TjurResult tr;
  };
  std::vector<Row> rows;  // ranked by mean TR, descending; ties lexical
};

ModelComparison compare_models(std::vector<std::pair<std::string, TjurResult>> results);

void write_tr_table(const std::string& path, const ModelComparison& table);

}  // namespace prefsdm
