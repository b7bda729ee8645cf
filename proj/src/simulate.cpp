#include "prefsdm/simulate.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "prefsdm/io.hpp"
#include "prefsdm/pointprocess.hpp"

namespace prefsdm {

SamplingDesign parse_design(const std::string& name) {
  if (name == "random") return SamplingDesign::random;
  if (name == "clustered") return SamplingDesign::clustered;
  if (name == "preferential") return SamplingDesign::preferential;
  throw ValidationError("unknown sampling design '" + name +
                        "' (expected random, clustered or preferential)");
}

const char* design_name(SamplingDesign d) {
  switch (d) {
    case SamplingDesign::random: return "random";
    case SamplingDesign::clustered: return "clustered";
    case SamplingDesign::preferential: return "preferential";
  }
  return "?";
}

void ScenarioSpec::validate() const {
  grid.validate();
  if (!(expected_sites > 0.0)) throw ValidationError("expected site count must be positive");
  if (design == SamplingDesign::preferential && delta_true != 0.0 && !has_eta_pa(response_kind))
    throw ValidationError("a nonzero shared-process delta needs a response kind with eta");
  if (alpha_true.size() != static_cast<std::size_t>(n_covariates) + 1)
    throw ValidationError("alpha_true must hold intercept + one value per covariate");
  if (n_covariates < 0) throw ValidationError("covariate count must be nonnegative");
  if (!(tau2 > 0.0)) throw ValidationError("tau2 must be positive");
  if (with_po() && !(po_expected_events > 0.0))
    throw ValidationError("expected presence-only event count must be positive");
  eta_params.validate();
  if (has_omega(response_kind)) omega_params.validate();
}

ScenarioSpec shared_process_preset() {
  ScenarioSpec spec;
  spec.design = SamplingDesign::preferential;
  spec.grid = GridSpec{{0.0, 0.0}, 0.5, 0.5, 20, 20};
  spec.n_covariates = 0;
  spec.intensity_intercept = 3.0;
  spec.calibrate_intercept = true;
  spec.eta_params = {3.0, 1.0};
  spec.delta_true = 1.0;
  spec.response_kind = ResponseKind::d;
  spec.alpha_true = {0.0};
  spec.expected_sites = 200.0;
  return spec;
}

namespace {

// Smooth synthetic covariate surfaces: random-direction sinusoids plus a
// gradient, standardized afterwards.
CovariateRaster synthesize_raster(const GridSpec& grid, int n_cov, Rng& rng) {
  CovariateRaster raster;
  raster.grid = grid;
  for (int j = 0; j < n_cov; ++j) raster.names.push_back("cov" + std::to_string(j + 1));
  raster.values.assign(static_cast<std::size_t>(grid.n_cells()) * n_cov, 0.0);
  const double lx = grid.n_cols * grid.cell_w;
  const double ly = grid.n_rows * grid.cell_h;
  for (int j = 0; j < n_cov; ++j) {
    const double ux = rng.normal(), uy = rng.normal();
    const double phase = rng.uniform(0.0, 6.283185307179586);
    const double freq = rng.uniform(0.5, 1.5);
    const double gx = rng.normal(0.0, 0.5), gy = rng.normal(0.0, 0.5);
    for (int c = 0; c < grid.n_cells(); ++c) {
      const Location cen = grid.centroid(c);
      const double sx = cen.x / lx, sy = cen.y / ly;
      raster.values[c * n_cov + j] = std::sin(6.283185307179586 * freq * (ux * sx + uy * sy) +
                                              phase) +
                                     gx * sx + gy * sy;
    }
  }
  return n_cov > 0 ? standardize_covariates(raster) : raster;
}

double calibrated_intercept(const GridSpec& grid, std::span<const double> eta,
                            double raw_intercept, double expected, bool calibrate) {
  if (!calibrate) return raw_intercept;
  double mass = 0.0;
  for (double e : eta) mass += grid.cell_area() * std::exp(e);
  return std::log(expected / mass);
}

std::vector<Location> draw_sites(const ScenarioSpec& spec, std::span<const double> eta,
                                 double intercept, const CovariateRaster& raster, Rng& rng) {
  const GridSpec& grid = spec.grid;
  std::vector<Location> sites;
  switch (spec.design) {
    case SamplingDesign::random: {
      const long n = rng.poisson(spec.expected_sites);
      for (long i = 0; i < n; ++i)
        sites.push_back({grid.origin.x + rng.uniform() * grid.n_cols * grid.cell_w,
                         grid.origin.y + rng.uniform() * grid.n_rows * grid.cell_h});
      break;
    }
    case SamplingDesign::clustered: {
      const double n_parents = spec.expected_sites / spec.cluster_offspring_mean;
      const long np = rng.poisson(n_parents);
      const double w = grid.n_cols * grid.cell_w, h = grid.n_rows * grid.cell_h;
      for (long p = 0; p < np; ++p) {
        const Location parent{grid.origin.x + rng.uniform() * w,
                              grid.origin.y + rng.uniform() * h};
        const long no = rng.poisson(spec.cluster_offspring_mean);
        for (long o = 0; o < no; ++o) {
          const Location s{parent.x + rng.normal(0.0, spec.cluster_sd),
                           parent.y + rng.normal(0.0, spec.cluster_sd)};
          if (grid.contains(s)) sites.push_back(s);
        }
      }
      break;
    }
    case SamplingDesign::preferential: {
      IntensityModelSpec ispec;
      ispec.kind = IntensityKind::lgcp_ii;
      ispec.beta.assign(raster.n_cov() + 1, 0.0);
      ispec.beta[0] = intercept;
      ispec.eta = std::vector<double>(eta.begin(), eta.end());
      ispec.eta_params = spec.eta_params;
      const auto pattern = simulate_point_pattern(ispec, raster, nullptr, rng);
      sites = pattern.events;
      break;
    }
  }
  return sites;
}

}  // namespace

ScenarioResult simulate_scenario(const ScenarioSpec& spec, std::uint64_t seed) {
  spec.validate();
  const Rng root(seed);
  Rng rng_cov = root.fork(1);
  Rng rng_field = root.fork(2);
  Rng rng_pattern = root.fork(3);
  Rng rng_response = root.fork(4);
  Rng rng_po = root.fork(5);

  ScenarioResult result;
  ScenarioTruth& truth = result.truth;
  truth.raster = synthesize_raster(spec.grid, spec.n_covariates, rng_cov);
  truth.alpha = spec.alpha_true;
  truth.delta = spec.delta_true;
  truth.delta_po = spec.delta_po_true;

  const int n_cells = spec.grid.n_cells();
  std::vector<Location> centroids(n_cells);
  for (int c = 0; c < n_cells; ++c) centroids[c] = spec.grid.centroid(c);

  truth.eta = dense_gp_draw(centroids, spec.eta_params, 0.0, rng_field);
  truth.intercept_used = calibrated_intercept(spec.grid, truth.eta, spec.intensity_intercept,
                                              spec.expected_sites, spec.calibrate_intercept);

  auto sites = draw_sites(spec, truth.eta, truth.intercept_used, truth.raster, rng_pattern);

  // presence-only pattern from its own field
  if (spec.with_po()) {
    truth.eta_po = dense_gp_draw(centroids, spec.po_eta_params, 0.0, rng_po);
    truth.po_intercept_used =
        calibrated_intercept(spec.grid, truth.eta_po, spec.po_intercept, spec.po_expected_events,
                             spec.calibrate_intercept);
    IntensityModelSpec ispec;
    ispec.kind = IntensityKind::lgcp_ii;
    ispec.beta.assign(truth.raster.n_cov() + 1, 0.0);
    ispec.beta[0] = truth.po_intercept_used;
    ispec.eta = truth.eta_po;
    ispec.eta_params = spec.po_eta_params;
    result.po = simulate_point_pattern(ispec, truth.raster, nullptr, rng_po);
    result.po.species = "synthetic";
  }

  // responses at the drawn sites
  const int n = static_cast<int>(sites.size());
  if (has_omega(spec.response_kind) && n > 0)
    truth.omega = dense_gp_draw(sites, spec.omega_params, 0.0, rng_response);
  truth.z.resize(n);
  result.pa.species = "synthetic";
  const double sd = std::sqrt(spec.tau2);
  for (int i = 0; i < n; ++i) {
    const int c = cell_of(sites[i], spec.grid);
    double mu = spec.alpha_true[0];
    for (int j = 0; j < spec.n_covariates; ++j)
      mu += spec.alpha_true[j + 1] * truth.raster.value(c, j);
    if (has_eta_pa(spec.response_kind)) mu += spec.delta_true * truth.eta[c];
    if (has_eta_po(spec.response_kind)) mu += spec.delta_po_true * truth.eta_po[c];
    if (has_omega(spec.response_kind)) mu += truth.omega[i];
    truth.z[i] = mu + sd * rng_response.normal();
    std::ostringstream id;
    id << "s" << i;
    result.pa.sites.push_back({id.str(), sites[i], truth.z[i] > 0.0 ? 1 : 0});
  }
  return result;
}

std::vector<int> realize_bernoulli_surface(std::span<const double> p_surface,
                                           std::uint64_t seed) {
  Rng rng(seed);
  std::vector<int> out(p_surface.size());
  for (std::size_t i = 0; i < p_surface.size(); ++i) {
    const double p = p_surface[i];
    if (!(p >= 0.0 && p <= 1.0))
      throw ValidationError("presence probability outside [0,1] at cell " + std::to_string(i));
    out[i] = rng.uniform() < p ? 1 : 0;
  }
  return out;
}

void write_truth_manifest(const std::string& path, const ScenarioTruth& truth,
                          std::uint64_t seed, const ScenarioSpec& spec) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write truth manifest: " + path);
  out << "design=" << design_name(spec.design) << "\n";
  out << "response_kind=" << response_kind_name(spec.response_kind) << "\n";
  out << "seed=" << seed << "\n";
  out << "delta_true=" << format_double(truth.delta) << "\n";
  out << "delta_po_true=" << format_double(truth.delta_po) << "\n";
  out << "intercept_used=" << format_double(truth.intercept_used) << "\n";
  out << "po_intercept_used=" << format_double(truth.po_intercept_used) << "\n";
  out << "sigma2_eta=" << format_double(spec.eta_params.sigma2) << "\n";
  out << "phi_eta=" << format_double(spec.eta_params.phi) << "\n";
  out << "tau2=" << format_double(spec.tau2) << "\n";
  for (std::size_t j = 0; j < truth.alpha.size(); ++j)
    out << "alpha." << j << "=" << format_double(truth.alpha[j]) << "\n";
  for (std::size_t c = 0; c < truth.eta.size(); ++c)
    out << "eta." << c << "=" << format_double(truth.eta[c]) << "\n";
  for (std::size_t c = 0; c < truth.eta_po.size(); ++c)
    out << "eta_po." << c << "=" << format_double(truth.eta_po[c]) << "\n";
  for (std::size_t i = 0; i < truth.z.size(); ++i)
    out << "z." << i << "=" << format_double(truth.z[i]) << "\n";
  for (std::size_t i = 0; i < truth.omega.size(); ++i)
    out << "omega." << i << "=" << format_double(truth.omega[i]) << "\n";
}

}  // namespace prefsdm
