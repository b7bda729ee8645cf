#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "prefsdm/geo.hpp"
#include "prefsdm/gp.hpp"
#include "prefsdm/latent.hpp"

namespace prefsdm {

enum class SamplingDesign { random, clustered, preferential };

SamplingDesign parse_design(const std::string& name);
const char* design_name(SamplingDesign d);

/// Synthetic-world description: latent fields, sampling design and
/// response model, plus (optionally) a presence-only pattern whose field
/// also shifts the responses.
struct ScenarioSpec {
  SamplingDesign design = SamplingDesign::preferential;
  GridSpec grid{{0.0, 0.0}, 0.5, 0.5, 20, 20};  // 10 x 10 region, 400 cells
  int n_covariates = 0;                         // synthesized smooth surfaces

  double intensity_intercept = 3.0;
  bool calibrate_intercept = true;  // rescale so the realized field gives
                                    // expected_sites events on average
  ExpCovParams eta_params{3.0, 1.0};
  double delta_true = 1.0;

  ResponseKind response_kind = ResponseKind::d;
  std::vector<double> alpha_true{0.0};  // intercept + covariates
  ExpCovParams omega_params{1.0, 1.0};
  double tau2 = 1.0;

  double expected_sites = 200.0;

  // clustered design (parent-offspring pattern, independent of Z)
  double cluster_offspring_mean = 10.0;
  double cluster_sd = 0.3;

  // presence-only side (active for fusion response kinds)
  double po_intercept = 3.0;
  ExpCovParams po_eta_params{3.0, 1.0};
  double delta_po_true = 0.0;
  double po_expected_events = 200.0;

  void validate() const;
  bool with_po() const { return has_eta_po(response_kind); }
};

/// The shared-process preset: intercept-3 log intensity, unit-decay field
/// with variance 3, delta = 1, intercept-only responses on a 10 x 10
/// region with ~200 sites.
ScenarioSpec shared_process_preset();

struct ScenarioTruth {
  CovariateRaster raster;  // standardized synthesized covariates
  std::vector<double> eta;     // per cell (sampling-design / PA field)
  std::vector<double> eta_po;  // per cell; empty without a PO side
  std::vector<double> omega;   // per site; empty without omega
  std::vector<double> z;       // per site
  std::vector<double> alpha;
  double delta = 0.0;
  double delta_po = 0.0;
  double intercept_used = 0.0;
  double po_intercept_used = 0.0;
};

struct ScenarioResult {
  PresenceAbsenceDataset pa;
  PresenceOnlyDataset po;  // empty unless the scenario has a PO side
  ScenarioTruth truth;
};

/// Deterministic given (spec, seed). The point pattern, latent fields and
/// responses consume independent substreams, so e.g. the clustered design
/// produces the same pattern whatever alpha_true is.
ScenarioResult simulate_scenario(const ScenarioSpec& spec, std::uint64_t seed);

/// Independent Bernoulli draw per cell from a probability surface.
std::vector<int> realize_bernoulli_surface(std::span<const double> p_surface, std::uint64_t seed);

void write_truth_manifest(const std::string& path, const ScenarioTruth& truth,
                          std::uint64_t seed, const ScenarioSpec& spec);

}  // namespace prefsdm
