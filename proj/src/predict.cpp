#include "prefsdm/predict.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <numeric>

#include "prefsdm/io.hpp"
#include "prefsdm/kernels.hpp"
#include "prefsdm/latent.hpp"
#include "prefsdm/mathutil.hpp"

namespace prefsdm {

namespace {

// type-7 quantile (linear interpolation) on a sorted copy
double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double h = (v.size() - 1) * q;
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - lo) * (v[hi] - v[lo]);
}

std::vector<std::size_t> covariate_columns(const CovariateRaster& raster,
                                           const std::vector<std::string>& names) {
  std::vector<std::size_t> cols;
  for (const auto& nm : names) {
    const auto it = std::find(raster.names.begin(), raster.names.end(), nm);
    if (it == raster.names.end())
      throw ValidationError("archive covariate '" + nm + "' not present in the raster");
    cols.push_back(static_cast<std::size_t>(it - raster.names.begin()));
  }
  return cols;
}

}  // namespace

std::vector<std::vector<double>> predict_p_draws(const PosteriorArchive& archive,
                                                 const CovariateRaster& raster,
                                                 std::span<const Location> targets, Rng& rng) {
  raster.validate();
  const ResponseKind kind = archive.kind();
  const bool any_field = has_omega(kind) || has_eta_pa(kind) || has_eta_po(kind);
  // field-free models iterate over every kept draw; field models over the
  // stored (thinned) field draws with their aligned scalar rows
  std::vector<long> rows;
  if (any_field) {
    rows = archive.field_draw_indices;
    if (rows.empty()) throw ValidationError("archive holds no field draws");
  } else {
    rows.resize(archive.n_draws());
    std::iota(rows.begin(), rows.end(), 0L);
    if (rows.empty()) throw ValidationError("archive holds no draws");
  }
  const std::size_t n_field_draws = rows.size();
  if (has_eta_pa(kind) && archive.eta_pa_draws.size() != n_field_draws)
    throw ValidationError("archive/model mismatch: eta_pa draws missing for model (" +
                          archive.model_kind + ")");
  if (has_eta_po(kind) && archive.eta_po_draws.size() != n_field_draws)
    throw ValidationError("archive/model mismatch: eta_po draws missing for model (" +
                          archive.model_kind + ")");
  if (has_omega(kind) && archive.omega_draws.size() != n_field_draws)
    throw ValidationError("archive/model mismatch: omega draws missing for model (" +
                          archive.model_kind + ")");
  if ((has_eta_pa(kind) && !archive.eta_pa_draws.empty() &&
       static_cast<int>(archive.eta_pa_draws[0].size()) != raster.grid.n_cells()) ||
      (has_eta_po(kind) && !archive.eta_po_draws.empty() &&
       static_cast<int>(archive.eta_po_draws[0].size()) != raster.grid.n_cells()))
    throw ValidationError("archive fields do not match the raster grid");

  const auto cols = covariate_columns(raster, archive.x_cov_names);
  const std::size_t p = cols.size() + 1;

  const int nt = static_cast<int>(targets.size());
  std::vector<int> target_cells(nt);
  Eigen::MatrixXd X(nt, p);
  for (int i = 0; i < nt; ++i) {
    target_cells[i] = cell_of(targets[i], raster.grid);
    X(i, 0) = 1.0;
    for (std::size_t j = 0; j < cols.size(); ++j)
      X(i, j + 1) = raster.value(target_cells[i], cols[j]);
  }

  // scalar columns used per draw
  std::vector<int> alpha_idx;
  alpha_idx.push_back(archive.scalar_index("alpha.const"));
  for (const auto& nm : archive.x_cov_names)
    alpha_idx.push_back(archive.scalar_index("alpha." + nm));
  const int delta_pa_idx = has_eta_pa(kind) ? archive.scalar_index("delta_pa") : -1;
  const int delta_po_idx = has_eta_po(kind) ? archive.scalar_index("delta_po") : -1;
  const int s2w_idx = has_omega(kind) ? archive.scalar_index("sigma2_omega") : -1;
  const int phiw_idx = has_omega(kind) ? archive.scalar_index("phi_omega") : -1;

  // omega kriging geometry is shared across draws
  std::unique_ptr<KrigingPlan> plan;
  if (has_omega(kind)) {
    if (archive.sites.empty()) throw ValidationError("archive has no training sites");
    plan = std::make_unique<KrigingPlan>(
        archive.sites, targets, std::min<int>(archive.k, static_cast<int>(archive.sites.size())));
  }

  std::vector<std::vector<double>> p_draws(n_field_draws, std::vector<double>(nt, 0.0));
  Eigen::VectorXd alpha(p);
  std::vector<double> kmean(nt), kvar(nt);
  const double inv_sd = 1.0 / std::sqrt(archive.tau2);
  for (std::size_t d = 0; d < n_field_draws; ++d) {
    const long gi = rows[d];
    for (std::size_t j = 0; j < p; ++j) alpha(j) = archive.scalar_draws[alpha_idx[j]][gi];
    Eigen::VectorXd mu = X * alpha;
    if (has_eta_pa(kind)) {
      const double delta = archive.scalar_draws[delta_pa_idx][gi];
      for (int i = 0; i < nt; ++i) mu(i) += delta * archive.eta_pa_draws[d][target_cells[i]];
    }
    if (has_eta_po(kind)) {
      const double delta = archive.scalar_draws[delta_po_idx][gi];
      for (int i = 0; i < nt; ++i) mu(i) += delta * archive.eta_po_draws[d][target_cells[i]];
    }
    if (has_omega(kind)) {
      const ExpCovParams params{archive.scalar_draws[s2w_idx][gi],
                                archive.scalar_draws[phiw_idx][gi]};
      plan->moments(params, 0.0, archive.omega_draws[d], 0.0, kmean, kvar);
      for (int i = 0; i < nt; ++i)
        mu(i) += kmean[i] + std::sqrt(std::max(kvar[i], 0.0)) * rng.normal();
    }
    for (int i = 0; i < nt; ++i) p_draws[d][i] = normal_cdf(mu(i) * inv_sd);
  }
  return p_draws;
}

PredictionSurface predict_surface(const PosteriorArchive& archive, const CovariateRaster& raster,
                                  Rng& rng) {
  const int n_cells = raster.grid.n_cells();
  std::vector<Location> centroids(n_cells);
  for (int c = 0; c < n_cells; ++c) centroids[c] = raster.grid.centroid(c);
  const auto p_draws = predict_p_draws(archive, raster, centroids, rng);

  PredictionSurface out;
  out.grid = raster.grid;
  out.mean.assign(n_cells, 0.0);
  out.lower.assign(n_cells, 0.0);
  out.upper.assign(n_cells, 0.0);
  std::vector<double> cell_vals(p_draws.size());
  for (int c = 0; c < n_cells; ++c) {
    for (std::size_t d = 0; d < p_draws.size(); ++d) cell_vals[d] = p_draws[d][c];
    const double mean = kernels::ops().sum(cell_vals.data(), cell_vals.size()) / cell_vals.size();
    double lo = quantile(cell_vals, 0.025);
    double hi = quantile(cell_vals, 0.975);
    // guard the order invariant in degenerate-skew corners
    lo = std::min(lo, mean);
    hi = std::max(hi, mean);
    out.mean[c] = mean;
    out.lower[c] = lo;
    out.upper[c] = hi;
  }
  return out;
}

void write_surface_csv(const std::string& path, const PredictionSurface& surface) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write surface file: " + path);
  out << "cell,mean,lo,hi\n";
  for (std::size_t c = 0; c < surface.mean.size(); ++c)
    out << c << "," << format_double(surface.mean[c]) << "," << format_double(surface.lower[c])
        << "," << format_double(surface.upper[c]) << "\n";
}

TjurResult tjur_r2(const std::vector<std::vector<double>>& p_draws, std::span<const int> y) {
  if (p_draws.empty()) throw ValidationError("tjur_r2 needs at least one draw");
  long n1 = 0, n0 = 0;
  for (int v : y) (v == 1 ? n1 : n0) += 1;
  if (n1 == 0 || n0 == 0)
    throw ValidationError("Tjur R2 is undefined when only one response class is present");

  std::vector<double> tr(p_draws.size());
  for (std::size_t d = 0; d < p_draws.size(); ++d) {
    if (p_draws[d].size() != y.size())
      throw ValidationError("p draws and responses differ in length");
    double s1 = 0.0, s0 = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) (y[i] == 1 ? s1 : s0) += p_draws[d][i];
    tr[d] = s1 / n1 - s0 / n0;
  }
  TjurResult out;
  out.mean = std::accumulate(tr.begin(), tr.end(), 0.0) / tr.size();
  out.lo = quantile(tr, 0.025);
  out.hi = quantile(tr, 0.975);
  return out;
}

std::pair<PresenceAbsenceDataset, PresenceAbsenceDataset> holdout_split(
    const PresenceAbsenceDataset& data, double fraction, std::uint64_t seed,
    HoldoutRounding rounding) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw ValidationError("holdout fraction must lie strictly between 0 and 1");
  const std::size_t n = data.sites.size();
  double raw = fraction * static_cast<double>(n);
  std::size_t n_test = 0;
  switch (rounding) {
    case HoldoutRounding::nearest: n_test = static_cast<std::size_t>(std::floor(raw + 0.5)); break;
    case HoldoutRounding::down: n_test = static_cast<std::size_t>(std::floor(raw)); break;
    case HoldoutRounding::up: n_test = static_cast<std::size_t>(std::ceil(raw)); break;
  }
  if (n_test == 0 || n_test >= n)
    throw ValidationError("holdout split would leave an empty train or test set");

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.uniform() * (i + 1));
    std::swap(perm[i], perm[std::min(j, i)]);
  }
  PresenceAbsenceDataset train, test;
  train.species = data.species;
  test.species = data.species;
  for (std::size_t i = 0; i < n; ++i)
    (i < n_test ? test : train).sites.push_back(data.sites[perm[i]]);
  return {train, test};
}

ModelComparison compare_models(std::vector<std::pair<std::string, TjurResult>> results) {
  std::sort(results.begin(), results.end(), [](const auto& a, const auto& b) {
    if (a.second.mean != b.second.mean) return a.second.mean > b.second.mean;
    return a.first < b.first;  // lexical tie-break
  });
  ModelComparison table;
  for (auto& [model, tr] : results) table.rows.push_back({model, tr});
  return table;
}

void write_tr_table(const std::string& path, const ModelComparison& table) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write TR table: " + path);
  out << "model,tr_mean,tr_lo,tr_hi\n";
  for (const auto& row : table.rows)
    out << row.model << "," << format_double(row.tr.mean) << "," << format_double(row.tr.lo)
        << "," << format_double(row.tr.hi) << "\n";
}

}  // namespace prefsdm
