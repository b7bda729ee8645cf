#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <vector>

#include "prefsdm/geo.hpp"
#include "prefsdm/gp.hpp"
#include "prefsdm/rng.hpp"

namespace testutil {

using namespace prefsdm;

inline GridSpec make_grid(int n_cols, int n_rows, double cell_w = 1.0, double cell_h = 1.0,
                          Location origin = {0.0, 0.0}) {
  return GridSpec{origin, cell_w, cell_h, n_cols, n_rows};
}

inline CovariateRaster make_raster(const GridSpec& grid, std::vector<std::string> names = {},
                                   std::function<double(Location, int)> f = {}) {
  CovariateRaster raster;
  raster.grid = grid;
  raster.names = std::move(names);
  raster.values.assign(static_cast<std::size_t>(grid.n_cells()) * raster.names.size(), 0.0);
  if (f)
    for (int c = 0; c < grid.n_cells(); ++c)
      for (std::size_t j = 0; j < raster.names.size(); ++j)
        raster.values[c * raster.names.size() + j] = f(grid.centroid(c), static_cast<int>(j));
  return raster;
}

inline std::vector<Location> random_sites(int n, double width, double height, Rng& rng) {
  std::vector<Location> sites(n);
  for (auto& s : sites) s = {rng.uniform() * width, rng.uniform() * height};
  return sites;
}

inline Eigen::MatrixXd expcov_matrix(std::span<const Location> sites, const ExpCovParams& params,
                                     double nugget) {
  const int n = static_cast<int>(sites.size());
  Eigen::MatrixXd C(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double d = distance(sites[i], sites[j]);
      C(i, j) = params.sigma2 * std::exp(-params.phi * d) + (i == j ? nugget : 0.0);
    }
  return C;
}

// Independent dense multivariate-normal log density: explicit inverse and
// determinant through full-pivot LU (a different route than the library's
// Cholesky path).
inline double mvn_logpdf_oracle(std::span<const double> v, std::span<const double> mean,
                                const Eigen::MatrixXd& C) {
  const int n = static_cast<int>(v.size());
  Eigen::VectorXd r(n);
  for (int i = 0; i < n; ++i) r(i) = v[i] - (mean.empty() ? 0.0 : mean[i]);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(C);
  const Eigen::MatrixXd Cinv = lu.inverse();
  const double log_det = std::log(std::abs(lu.determinant()));
  const double quad = r.dot(Cinv * r);
  return -0.5 * (n * 1.8378770664093454835606594728112 + log_det + quad);
}

inline double sample_mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double sample_var(std::span<const double> v) {
  const double m = sample_mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

}  // namespace testutil
