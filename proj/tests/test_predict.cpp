#include <doctest.h>

#include <cmath>
#include <numeric>
#include <set>

#include "prefsdm/mathutil.hpp"
#include "prefsdm/predict.hpp"
#include "prefsdm/simulate.hpp"
#include "test_helpers.hpp"

using namespace prefsdm;
using namespace testutil;

namespace {

PresenceAbsenceDataset make_pa(const std::vector<Location>& sites, const std::vector<int>& y) {
  PresenceAbsenceDataset data;
  for (std::size_t i = 0; i < sites.size(); ++i)
    data.sites.push_back({"s" + std::to_string(i), sites[i], y[i]});
  return data;
}

}  // namespace

TEST_CASE("tjur_r2 hand cases") {
  SUBCASE("0.7 from the worked example") {
    const std::vector<std::vector<double>> p = {{0.9, 0.8, 0.1, 0.2}};
    const std::vector<int> y = {1, 1, 0, 0};
    const auto tr = tjur_r2(p, y);
    CHECK(tr.mean == doctest::Approx(0.7).epsilon(1e-12));
  }
  SUBCASE("constant probabilities give zero") {
    const std::vector<std::vector<double>> p = {{0.4, 0.4, 0.4}};
    const std::vector<int> y = {1, 0, 1};
    CHECK(tjur_r2(p, y).mean == doctest::Approx(0.0));
  }
  SUBCASE("perfect separation gives one") {
    const std::vector<std::vector<double>> p = {{1.0, 0.0, 1.0}};
    const std::vector<int> y = {1, 0, 1};
    CHECK(tjur_r2(p, y).mean == doctest::Approx(1.0));
  }
  SUBCASE("single-class responses rejected") {
    const std::vector<std::vector<double>> p = {{0.4, 0.6}};
    const std::vector<int> y = {1, 1};
    CHECK_THROWS_AS(tjur_r2(p, y), ValidationError);
  }
  SUBCASE("invariant to permutation and duplication") {
    const std::vector<std::vector<double>> p = {{0.9, 0.2, 0.7, 0.4}};
    const std::vector<int> y = {1, 0, 1, 0};
    const double base = tjur_r2(p, y).mean;
    const std::vector<std::vector<double>> perm = {{0.4, 0.9, 0.2, 0.7}};
    const std::vector<int> yperm = {0, 1, 0, 1};
    CHECK(tjur_r2(perm, yperm).mean == doctest::Approx(base).epsilon(1e-14));
    const std::vector<std::vector<double>> dup = {{0.9, 0.2, 0.7, 0.4, 0.9, 0.2, 0.7, 0.4}};
    const std::vector<int> ydup = {1, 0, 1, 0, 1, 0, 1, 0};
    CHECK(tjur_r2(dup, ydup).mean == doctest::Approx(base).epsilon(1e-14));
  }
  SUBCASE("draw-wise summary with interval") {
    const std::vector<std::vector<double>> p = {
        {0.9, 0.1}, {0.8, 0.2}, {0.7, 0.3}, {0.6, 0.4}};
    const std::vector<int> y = {1, 0};
    const auto tr = tjur_r2(p, y);
    CHECK(tr.mean == doctest::Approx(0.5));
    CHECK(tr.lo <= tr.mean);
    CHECK(tr.hi >= tr.mean);
  }
}

TEST_CASE("holdout_split") {
  Rng rng(1);
  SUBCASE("n = 4314 with fraction 0.2 gives 863 under round-half-up") {
    const auto sites = random_sites(4314, 10.0, 10.0, rng);
    std::vector<int> y(4314);
    for (auto& v : y) v = rng.bernoulli(0.3);
    const auto data = make_pa(sites, y);
    const auto [train, test] = holdout_split(data, 0.2, 11);
    CHECK(test.sites.size() == 863);  // 862.8 rounds half-up to 863
    CHECK(train.sites.size() == 4314 - 863);
    const auto [train_d, test_d] = holdout_split(data, 0.2, 11, HoldoutRounding::down);
    CHECK(test_d.sites.size() == 862);
    const auto [train_u, test_u] = holdout_split(data, 0.2, 11, HoldoutRounding::up);
    CHECK(test_u.sites.size() == 863);
  }
  SUBCASE("half of ten is five") {
    const auto sites = random_sites(10, 2.0, 2.0, rng);
    const std::vector<int> y = {0, 1, 0, 1, 0, 1, 0, 1, 0, 1};
    const auto [train, test] = holdout_split(make_pa(sites, y), 0.5, 3);
    CHECK(train.sites.size() == 5);
    CHECK(test.sites.size() == 5);
  }
  SUBCASE("seed determinism and disjoint exhaustive cover") {
    const auto sites = random_sites(40, 2.0, 2.0, rng);
    std::vector<int> y(40);
    for (auto& v : y) v = rng.bernoulli(0.5);
    const auto data = make_pa(sites, y);
    const auto [a_train, a_test] = holdout_split(data, 0.25, 7);
    const auto [b_train, b_test] = holdout_split(data, 0.25, 7);
    REQUIRE(a_test.sites.size() == b_test.sites.size());
    for (std::size_t i = 0; i < a_test.sites.size(); ++i)
      CHECK(a_test.sites[i].id == b_test.sites[i].id);
    std::set<std::string> ids;
    for (const auto& s : a_train.sites) ids.insert(s.id);
    for (const auto& s : a_test.sites) CHECK(ids.insert(s.id).second);
    CHECK(ids.size() == 40);
  }
  SUBCASE("degenerate fractions rejected") {
    const auto sites = random_sites(4, 2.0, 2.0, rng);
    const std::vector<int> y = {0, 1, 0, 1};
    CHECK_THROWS_AS(holdout_split(make_pa(sites, y), 0.05, 1), ValidationError);
    CHECK_THROWS_AS(holdout_split(make_pa(sites, y), 1.5, 1), ValidationError);
  }
}

TEST_CASE("compare_models ranks by mean with lexical tie-break") {
  SUBCASE("reported ordering: strong shared-process fit above the plain regression") {
    std::vector<std::pair<std::string, TjurResult>> rows;
    rows.emplace_back("a", TjurResult{0.126, 0.112, 0.139});
    rows.emplace_back("c", TjurResult{0.412, 0.382, 0.451});
    const auto table = compare_models(std::move(rows));
    REQUIRE(table.rows.size() == 2);
    CHECK(table.rows[0].model == "c");
    CHECK(table.rows[1].model == "a");
  }
  SUBCASE("single entry") {
    std::vector<std::pair<std::string, TjurResult>> rows;
    rows.emplace_back("b", TjurResult{0.2, 0.1, 0.3});
    CHECK(compare_models(std::move(rows)).rows.size() == 1);
  }
  SUBCASE("equal means break ties lexically") {
    std::vector<std::pair<std::string, TjurResult>> rows;
    rows.emplace_back("d", TjurResult{0.2, 0.1, 0.3});
    rows.emplace_back("b", TjurResult{0.2, 0.1, 0.3});
    const auto table = compare_models(std::move(rows));
    CHECK(table.rows[0].model == "b");
    CHECK(table.rows[1].model == "d");
  }
}

namespace {

// hand-assembled archive for a pure regression model (kind a)
PosteriorArchive flat_archive(int n_draws, double alpha_value) {
  PosteriorArchive arch;
  arch.model_kind = "a";
  arch.k = 15;
  arch.tau2 = 1.0;
  arch.scalar_names = {"alpha.const"};
  arch.scalar_draws.resize(1);
  for (int d = 0; d < n_draws; ++d) {
    arch.scalar_draws[0].push_back(alpha_value);
    arch.chain_of_draw.push_back(0);
    arch.iter_of_draw.push_back(d);
  }
  arch.x_cov_names = {};
  return arch;
}

}  // namespace

TEST_CASE("predict_surface: zero-coefficient archive gives the one-half surface") {
  const auto raster = make_raster(make_grid(3, 3));
  const auto arch = flat_archive(50, 0.0);
  Rng rng(2);
  const auto surface = predict_surface(arch, raster, rng);
  for (int c = 0; c < 9; ++c) {
    CHECK(surface.mean[c] == doctest::Approx(0.5));
    CHECK(surface.lower[c] == doctest::Approx(0.5));
    CHECK(surface.upper[c] == doctest::Approx(0.5));
  }
}

TEST_CASE("predict respects the quantile ordering invariant") {
  const auto raster = make_raster(make_grid(3, 3));
  PosteriorArchive arch = flat_archive(200, 0.0);
  Rng noise(3);
  for (auto& v : arch.scalar_draws[0]) v = noise.normal(0.0, 0.7);
  Rng rng(4);
  const auto surface = predict_surface(arch, raster, rng);
  for (int c = 0; c < 9; ++c) {
    CHECK(surface.lower[c] <= surface.mean[c]);
    CHECK(surface.mean[c] <= surface.upper[c]);
    CHECK(surface.lower[c] >= 0.0);
    CHECK(surface.upper[c] <= 1.0);
  }
}

TEST_CASE("far cells revert to the integrated-probit band under omega models") {
  // sites sit in the left cell; the right cell centroid is ~100 length
  // units away, so kriging contributes a fresh N(0, sigma2) draw there.
  // The posterior mean of p then matches Phi(a / sqrt(1 + sigma2)).
  const GridSpec grid = make_grid(2, 1, 100.0, 100.0);
  const auto raster = make_raster(grid);
  const double abar = 0.4, sig2 = 2.0, phi = 1.5;

  PosteriorArchive arch;
  arch.model_kind = "b";
  arch.k = 15;
  arch.tau2 = 1.0;
  arch.scalar_names = {"alpha.const", "sigma2_omega", "phi_omega"};
  arch.scalar_draws.resize(3);
  Rng prior(5);
  const int n_draws = 6000;
  const int n_sites = 12;
  for (int i = 0; i < n_sites; ++i) {
    arch.site_ids.push_back("s" + std::to_string(i));
    arch.sites.push_back({5.0 + 0.5 * (i % 4), 5.0 + 0.5 * (i / 4)});
  }
  for (int d = 0; d < n_draws; ++d) {
    arch.scalar_draws[0].push_back(abar);
    arch.scalar_draws[1].push_back(sig2);
    arch.scalar_draws[2].push_back(phi);
    arch.chain_of_draw.push_back(0);
    arch.iter_of_draw.push_back(d);
    arch.field_draw_indices.push_back(d);
    std::vector<double> omega(n_sites);
    for (auto& v : omega) v = prior.normal(0.0, std::sqrt(sig2));
    arch.omega_draws.push_back(std::move(omega));
  }

  Rng rng(6);
  const std::vector<Location> far = {grid.centroid(1)};
  const auto p_draws = predict_p_draws(arch, raster, far, rng);
  double mean = 0.0;
  for (const auto& row : p_draws) mean += row[0] / p_draws.size();
  const double want = normal_cdf(abar / std::sqrt(1.0 + sig2));
  // Monte Carlo SE of Phi(a + omega) draws is below 0.3/sqrt(n)
  CHECK(std::abs(mean - want) < 4.0 * 0.3 / std::sqrt(static_cast<double>(n_draws)));
}

TEST_CASE("surface halves agree within Monte Carlo error") {
  ScenarioSpec spec = shared_process_preset();
  spec.expected_sites = 120.0;
  spec.grid = make_grid(10, 10);
  const auto sim = simulate_scenario(spec, 21);
  FitSpec fit_spec;
  fit_spec.kind = ResponseKind::d;
  ChainConfig chain;
  chain.burn_in = 400;
  chain.keep = 800;
  chain.field_thin = 2;
  chain.seed = 31;
  const auto arch =
      fit(fit_spec, sim.pa, nullptr, sim.truth.raster, nullptr, PriorSpec{}, chain);

  std::vector<Location> centroids;
  for (int c = 0; c < spec.grid.n_cells(); ++c) centroids.push_back(spec.grid.centroid(c));
  Rng rng(7);
  const auto p_draws = predict_p_draws(arch, sim.truth.raster, centroids, rng);
  REQUIRE(p_draws.size() >= 100);
  const std::size_t half = p_draws.size() / 2;
  int violations = 0;
  for (int c = 0; c < spec.grid.n_cells(); ++c) {
    std::vector<double> a, b;
    for (std::size_t d = 0; d < p_draws.size(); ++d)
      (d < half ? a : b).push_back(p_draws[d][c]);
    const double se = std::sqrt(sample_var(a) / a.size() + sample_var(b) / b.size());
    if (std::abs(sample_mean(a) - sample_mean(b)) > 3.0 * se + 0.02) ++violations;
  }
  // a few cells may exceed the band by chance/autocorrelation
  CHECK(violations <= 8);
}

TEST_CASE("predict validates archive/model consistency") {
  const auto raster = make_raster(make_grid(3, 3));
  PosteriorArchive arch = flat_archive(20, 0.0);
  arch.model_kind = "b";  // omega draws required but absent
  Rng rng(8);
  CHECK_THROWS_AS(predict_surface(arch, raster, rng), ValidationError);
  arch.model_kind = "unknown";
  CHECK_THROWS_AS(predict_surface(arch, raster, rng), ValidationError);
}
