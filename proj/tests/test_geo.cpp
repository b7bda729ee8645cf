#include <doctest.h>

#include <sstream>

#include "prefsdm/geo.hpp"
#include "prefsdm/rng.hpp"
#include "test_helpers.hpp"

using namespace prefsdm;
using namespace testutil;

TEST_CASE("cell_of: half-open cells with far-edge fold") {
  const GridSpec grid = make_grid(2, 2, 1.0, 1.0);
  CHECK(cell_of({0.0, 0.0}, grid) == 0);                 // origin point
  CHECK(cell_of({1.0, 0.5}, grid) == 1);                 // interior vertical edge: right cell
  CHECK(cell_of({0.5, 1.0}, grid) == 2);                 // interior horizontal edge: upper cell
  CHECK(cell_of({2.0, 2.0}, grid) == 3);                 // far corner folds into the last cell
  CHECK(cell_of({1.7, 0.2}, grid) == 1);
  CHECK_THROWS_AS(cell_of({2.5, 0.5}, grid), ValidationError);
  CHECK_THROWS_AS(cell_of({-0.1, 0.5}, grid), ValidationError);
}

TEST_CASE("cell index/rowcol bijection") {
  const GridSpec grid = make_grid(5, 3);
  for (int c = 0; c < grid.n_cells(); ++c) {
    const auto [r, k] = grid.row_col(c);
    CHECK(grid.cell_index(r, k) == c);
    CHECK(cell_of(grid.centroid(c), grid) == c);
  }
}

TEST_CASE("standardize_covariates: hand case, idempotence, degenerate column") {
  const GridSpec grid = make_grid(3, 1);
  CovariateRaster raster = make_raster(grid, {"a"});
  raster.values = {1.0, 2.0, 3.0};
  const auto out = standardize_covariates(raster);
  // sample (n-1) sd of {1,2,3} is 1, so the column maps to {-1,0,1}
  CHECK(out.values[0] == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(out.values[1] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(out.values[2] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(out.standardization[0].first == doctest::Approx(2.0));
  CHECK(out.standardization[0].second == doctest::Approx(1.0));

  const auto twice = standardize_covariates(out);
  for (std::size_t i = 0; i < out.values.size(); ++i)
    CHECK(std::abs(twice.values[i] - out.values[i]) < 1e-12);

  CovariateRaster flat = make_raster(grid, {"flat"});
  flat.values = {4.0, 4.0, 4.0};
  CHECK_THROWS_WITH_AS(standardize_covariates(flat),
                       doctest::Contains("flat"), ValidationError);
}

TEST_CASE("standardized columns have mean 0 and sd 1 within 1e-9") {
  const GridSpec grid = make_grid(20, 20);
  Rng rng(5);
  CovariateRaster raster = make_raster(grid, {"u", "v"});
  for (auto& v : raster.values) v = rng.normal(3.0, 7.0);
  const auto out = standardize_covariates(raster);
  for (std::size_t j = 0; j < 2; ++j) {
    double mean = 0.0, ss = 0.0;
    const int n = grid.n_cells();
    for (int c = 0; c < n; ++c) mean += out.value(c, j);
    mean /= n;
    for (int c = 0; c < n; ++c) ss += (out.value(c, j) - mean) * (out.value(c, j) - mean);
    CHECK(std::abs(mean) < 1e-9);
    CHECK(std::abs(std::sqrt(ss / (n - 1)) - 1.0) < 1e-9);
  }
}

TEST_CASE("ingest presence/absence: drops, duplicates, responses") {
  const GridSpec grid = make_grid(2, 2, 1.0, 1.0);

  SUBCASE("out-of-region row dropped with count") {
    std::istringstream in("id,x,y,y01\na,0.5,0.5,1\nb,0.7,0.2,0\nc,5.0,0.5,1\n");
    IngestReport rep;
    const auto data = ingest_presence_absence(in, grid, &rep);
    CHECK(data.sites.size() == 2);
    CHECK(rep.dropped_out_of_region == 1);
    CHECK(rep.dropped_duplicate == 0);
  }
  SUBCASE("duplicate coordinates dropped") {
    std::istringstream in("id,x,y,y01\na,0.5,0.5,1\nb,0.5,0.5,0\n");
    IngestReport rep;
    const auto data = ingest_presence_absence(in, grid, &rep);
    CHECK(data.sites.size() == 1);
    CHECK(rep.dropped_duplicate == 1);
  }
  SUBCASE("empty input gives empty dataset") {
    std::istringstream in("id,x,y,y01\n");
    IngestReport rep;
    const auto data = ingest_presence_absence(in, grid, &rep);
    CHECK(data.sites.empty());
    CHECK(rep.kept == 0);
  }
  SUBCASE("malformed row carries the line number") {
    std::istringstream in("id,x,y,y01\na,0.5,zzz,1\n");
    CHECK_THROWS_WITH_AS(ingest_presence_absence(in, grid),
                         doctest::Contains("line 2"), ParseError);
  }
  SUBCASE("response outside {0,1} rejected") {
    std::istringstream in("id,x,y,y01\na,0.5,0.5,2\n");
    CHECK_THROWS_AS(ingest_presence_absence(in, grid), ValidationError);
  }
  SUBCASE("coordinate scale flag") {
    std::istringstream in("id,x,y,y01\na,15,5,1\n");  // km units on a 10-km grid
    IngestReport rep;
    const auto data = ingest_presence_absence(in, grid, &rep, 0.1);
    REQUIRE(data.sites.size() == 1);
    CHECK(data.sites[0].loc.x == doctest::Approx(1.5));
  }
}

TEST_CASE("ingest presence-only: duplicated event coordinates discarded") {
  const GridSpec grid = make_grid(2, 2);
  std::istringstream in("id,x,y\n0,0.25,0.25\n1,0.25,0.25\n2,1.5,1.5\n");
  IngestReport rep;
  const auto data = ingest_presence_only(in, grid, &rep);
  CHECK(data.events.size() == 2);
  CHECK(rep.dropped_duplicate == 1);
}

TEST_CASE("counts_per_cell basics and empty-cell count") {
  const GridSpec grid = make_grid(2, 2);
  SUBCASE("no points") {
    const auto cc = counts_per_cell({}, grid);
    CHECK(cc.total() == 0);
    CHECK(cc.n_empty == 4);
  }
  SUBCASE("all in one cell") {
    std::vector<Location> pts(5, {0.2, 0.3});
    const auto cc = counts_per_cell(pts, grid);
    CHECK(cc.counts[0] == 5);
    CHECK(cc.total() == 5);
    CHECK(cc.n_empty == 3);
  }
  SUBCASE("one per cell") {
    std::vector<Location> pts = {{0.5, 0.5}, {1.5, 0.5}, {0.5, 1.5}, {1.5, 1.5}};
    const auto cc = counts_per_cell(pts, grid);
    for (long c : cc.counts) CHECK(c == 1);
    CHECK(cc.n_empty == 0);
  }
}

TEST_CASE("counts_per_cell equals the histogram of cell_of (property)") {
  const GridSpec grid = make_grid(7, 5, 0.6, 1.1, {-1.0, 2.0});
  Rng rng(99);
  for (int rep = 0; rep < 5; ++rep) {
    std::vector<Location> pts;
    for (int i = 0; i < 400; ++i)
      pts.push_back({grid.origin.x + rng.uniform() * grid.n_cols * grid.cell_w,
                     grid.origin.y + rng.uniform() * grid.n_rows * grid.cell_h});
    const auto cc = counts_per_cell(pts, grid);
    std::vector<long> hist(grid.n_cells(), 0);
    for (const auto& s : pts) ++hist[cell_of(s, grid)];
    CHECK(cc.counts == hist);
    CHECK(cc.total() == 400);
  }
}

TEST_CASE("block_average: hand cases and monotonicity") {
  SUBCASE("all ones") {
    const std::vector<double> v(6, 1.0), a(6, 2.0);
    const std::vector<int> cells = {0, 1, 2, 3, 4, 5};
    CHECK(block_average(v, a, cells) == doctest::Approx(1.0));
  }
  SUBCASE("half ones with equal areas") {
    const std::vector<double> v = {1, 0, 1, 0};
    const std::vector<double> a(4, 1.0);
    const std::vector<int> cells = {0, 1, 2, 3};
    CHECK(block_average(v, a, cells) == doctest::Approx(0.5));
  }
  SUBCASE("unequal areas 1 and 3 with values 1 and 0 give 0.25") {
    const std::vector<double> v = {1.0, 0.0};
    const std::vector<double> a = {1.0, 3.0};
    const std::vector<int> cells = {0, 1};
    CHECK(block_average(v, a, cells) == doctest::Approx(0.25));
  }
  SUBCASE("empty set rejected") {
    const std::vector<double> v = {1.0};
    const std::vector<double> a = {1.0};
    CHECK_THROWS_AS(block_average(v, a, {}), ValidationError);
  }
  SUBCASE("monotone in pointwise domination") {
    Rng rng(3);
    std::vector<double> lo(20), hi(20), a(20);
    for (int i = 0; i < 20; ++i) {
      lo[i] = rng.uniform();
      hi[i] = lo[i] + rng.uniform() * (1.0 - lo[i]);
      a[i] = rng.uniform(0.5, 2.0);
    }
    std::vector<int> cells = {1, 3, 5, 7, 9, 11};
    CHECK(block_average(hi, a, cells) >= block_average(lo, a, cells));
  }
}

TEST_CASE("degradation layers: q = u * p exactly on every path") {
  SUBCASE("explicit construction") {
    Rng rng(8);
    std::vector<double> u(50), p(50);
    for (int i = 0; i < 50; ++i) {
      u[i] = rng.uniform();
      p[i] = rng.uniform();
    }
    const DegradationLayers layers(u, p);
    for (int i = 0; i < 50; ++i) {
      CHECK(layers.q(i) == u[i] * p[i]);
      CHECK(layers.q(i) <= layers.u(i));
    }
  }
  SUBCASE("effort-derived layers are binary with u = 1") {
    CellCounts cc;
    cc.counts = {0, 2, 0, 1};
    const auto layers = DegradationLayers::from_effort(cc);
    CHECK(layers.u(0) == 1.0);
    CHECK(layers.q(0) == 0.0);
    CHECK(layers.q(1) == 1.0);
    CHECK(layers.q(2) == 0.0);
    CHECK(layers.q(3) == 1.0);
  }
  SUBCASE("out-of-range values rejected") {
    CHECK_THROWS_AS(DegradationLayers({1.2}, {0.5}), ValidationError);
    CHECK_THROWS_AS(DegradationLayers({0.5}, {-0.1}), ValidationError);
  }
}
