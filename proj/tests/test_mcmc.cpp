#include <doctest.h>

#include <Eigen/Cholesky>
#include <cmath>
#include <numeric>

#include "prefsdm/mathutil.hpp"
#include "prefsdm/mcmc.hpp"
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

// batch-means standard error of the mean of an autocorrelated series
double batch_se(std::span<const double> v, int batches = 20) {
  const std::size_t len = v.size() / batches;
  std::vector<double> means;
  for (int b = 0; b < batches; ++b) {
    double s = 0.0;
    for (std::size_t i = b * len; i < (b + 1) * len; ++i) s += v[i];
    means.push_back(s / len);
  }
  const double grand = sample_mean(means);
  double ss = 0.0;
  for (double m : means) ss += (m - grand) * (m - grand);
  return std::sqrt(ss / (batches - 1) / batches);
}

}  // namespace

TEST_CASE("effective_sample_size") {
  SUBCASE("independent draws stay near N") {
    Rng rng(1);
    std::vector<double> draws(10000);
    for (auto& d : draws) d = rng.normal();
    const auto res = effective_sample_size(draws);
    CHECK(!res.degenerate);
    CHECK(res.value / draws.size() > 0.8);
    CHECK(res.value / draws.size() < 1.2);
  }
  SUBCASE("AR(1) with rho = 0.9 gives the analytic factor") {
    Rng rng(2);
    const double rho = 0.9;
    std::vector<double> draws(10000);
    draws[0] = rng.normal();
    for (std::size_t i = 1; i < draws.size(); ++i)
      draws[i] = rho * draws[i - 1] + std::sqrt(1.0 - rho * rho) * rng.normal();
    const auto res = effective_sample_size(draws);
    const double want = (1.0 - rho) / (1.0 + rho);  // 0.0526
    CHECK(std::abs(res.value / draws.size() - want) / want < 0.30);
  }
  SUBCASE("constant series reports 1 and the degenerate flag") {
    const std::vector<double> draws(64, 3.14);
    const auto res = effective_sample_size(draws);
    CHECK(res.value == 1.0);
    CHECK(res.degenerate);
  }
  SUBCASE("fewer than 10 draws rejected") {
    const std::vector<double> draws(9, 0.0);
    CHECK_THROWS_AS(effective_sample_size(draws), ValidationError);
  }
}

TEST_CASE("fit bookkeeping: burn_in 0, keep 10 gives exactly 10 draws") {
  Rng rng(3);
  const auto sites = random_sites(20, 2.0, 2.0, rng);
  std::vector<int> y(20);
  for (auto& v : y) v = rng.bernoulli(0.5);
  const auto raster = make_raster(make_grid(2, 2));
  FitSpec spec;
  spec.kind = ResponseKind::a;
  ChainConfig chain;
  chain.burn_in = 0;
  chain.keep = 10;
  chain.seed = 9;
  const auto arch = fit(spec, make_pa(sites, y), nullptr, raster, nullptr, PriorSpec{}, chain);
  CHECK(arch.n_draws() == 10);
  for (const auto& draws : arch.scalar_draws) CHECK(draws.size() == 10);
}

TEST_CASE("update_z: signs, symmetry, stationarity") {
  Rng rng(4);
  const int n = 400;
  const auto sites = random_sites(n, 4.0, 4.0, rng);
  std::vector<int> y(n);
  for (int i = 0; i < n; ++i) y[i] = i % 2;  // balanced
  const auto raster = make_raster(make_grid(4, 4));
  FitSpec spec;
  spec.kind = ResponseKind::a;
  GibbsSampler sampler(spec, make_pa(sites, y), nullptr, raster, nullptr, PriorSpec{}, Rng(5));
  sampler.state().alpha.setZero();
  sampler.refresh_caches();

  sampler.update_z();
  for (int i = 0; i < n; ++i) {
    if (y[i] == 1) CHECK(sampler.state().z(i) > 0.0);
    else CHECK(sampler.state().z(i) <= 0.0);
  }

  // with all fields zero and balanced y the z mean sits near zero, and
  // repeated updates do not drift
  std::vector<double> first, second;
  for (int it = 0; it < 10000; ++it) {
    sampler.update_z();
    (it < 5000 ? first : second).push_back(sampler.state().z.mean());
  }
  const double se = std::sqrt(sample_var(first) / first.size());
  CHECK(std::abs(sample_mean(first)) < 4.0 * se + 0.01);
  CHECK(std::abs(sample_mean(first) - sample_mean(second)) <
        4.0 * std::sqrt(sample_var(first) / first.size() + sample_var(second) / second.size()));
}

TEST_CASE("alpha conditional matches the dense-solve oracle on n = 50") {
  Rng rng(6);
  const int n = 50;
  const auto sites = random_sites(n, 5.0, 5.0, rng);
  std::vector<int> y(n);
  for (auto& v : y) v = rng.bernoulli(0.5);
  auto raster = make_raster(make_grid(5, 5), {"w1", "w2"}, [&](Location s, int j) {
    return j == 0 ? std::sin(1.7 * s.x) : s.y - 2.5;
  });
  raster = standardize_covariates(raster);
  FitSpec spec;
  spec.kind = ResponseKind::a;
  PriorSpec priors;
  priors.alpha_var = 37.0;
  GibbsSampler sampler(spec, make_pa(sites, y), nullptr, raster, nullptr, priors, Rng(7));
  for (int i = 0; i < n; ++i) sampler.state().z(i) = rng.normal(0.3, 1.2);
  sampler.refresh_caches();

  const auto [mean, cov] = sampler.alpha_conditional();
  const Eigen::MatrixXd& X = sampler.design_x();
  Eigen::MatrixXd P = X.transpose() * X;  // tau2 = 1
  P.diagonal().array() += 1.0 / priors.alpha_var;
  const Eigen::VectorXd want = P.fullPivLu().solve(X.transpose() * sampler.state().z);
  for (int j = 0; j < mean.size(); ++j) CHECK(mean(j) == doctest::Approx(want(j)).epsilon(1e-8));
  const Eigen::MatrixXd cov_want = P.fullPivLu().inverse();
  for (int j = 0; j < mean.size(); ++j)
    CHECK(cov(j, j) == doctest::Approx(cov_want(j, j)).epsilon(1e-8));
}

TEST_CASE("alpha conditional: flat-prior limit recovers least squares, n = 0 the prior") {
  Rng rng(8);
  const int n = 40;
  const auto sites = random_sites(n, 3.0, 3.0, rng);
  std::vector<int> y(n);
  for (auto& v : y) v = rng.bernoulli(0.5);
  auto raster = make_raster(make_grid(3, 3), {"w"}, [](Location s, int) { return s.x; });
  raster = standardize_covariates(raster);
  FitSpec spec;
  spec.kind = ResponseKind::a;

  SUBCASE("flat prior") {
    PriorSpec priors;
    priors.alpha_var = 1e12;
    GibbsSampler sampler(spec, make_pa(sites, y), nullptr, raster, nullptr, priors, Rng(1));
    for (int i = 0; i < n; ++i) sampler.state().z(i) = rng.normal();
    sampler.refresh_caches();
    const auto [mean, cov] = sampler.alpha_conditional();
    const Eigen::MatrixXd& X = sampler.design_x();
    const Eigen::VectorXd ls =
        (X.transpose() * X).fullPivLu().solve(X.transpose() * sampler.state().z);
    for (int j = 0; j < mean.size(); ++j)
      CHECK(mean(j) == doctest::Approx(ls(j)).epsilon(1e-6));
  }
  SUBCASE("no data draws from the prior") {
    PriorSpec priors;
    priors.alpha_var = 25.0;
    GibbsSampler sampler(spec, make_pa({}, {}), nullptr, raster, nullptr, priors, Rng(2));
    const auto [mean, cov] = sampler.alpha_conditional();
    for (int j = 0; j < mean.size(); ++j) {
      CHECK(mean(j) == 0.0);
      CHECK(cov(j, j) == doctest::Approx(25.0).epsilon(1e-12));
    }
    std::vector<double> draws;
    for (int r = 0; r < 4000; ++r) {
      sampler.update_alpha();
      draws.push_back(sampler.state().alpha(0));
    }
    CHECK(std::abs(sample_mean(draws)) < 3.0 * 5.0 / std::sqrt(4000.0));
    CHECK(sample_var(draws) == doctest::Approx(25.0).epsilon(0.15));
  }
}

TEST_CASE("rank-deficient design names the collinear column") {
  Rng rng(10);
  const auto sites = random_sites(30, 3.0, 3.0, rng);
  std::vector<int> y(30, 1);
  y[0] = 0;
  auto raster = make_raster(make_grid(3, 3), {"dup1", "dup2"},
                            [](Location s, int) { return s.x + s.y; });  // identical columns
  FitSpec spec;
  spec.kind = ResponseKind::a;
  CHECK_THROWS_WITH_AS(
      GibbsSampler(spec, make_pa(sites, y), nullptr, raster, nullptr, PriorSpec{}, Rng(1)),
      doctest::Contains("dup"), ValidationError);
}

TEST_CASE("update_omega: prior dominance when sigma2 tends to zero") {
  Rng rng(11);
  const int n = 25;
  const auto sites = random_sites(n, 4.0, 4.0, rng);
  std::vector<int> y(n);
  for (auto& v : y) v = rng.bernoulli(0.5);
  const auto raster = make_raster(make_grid(4, 4));
  FitSpec spec;
  spec.kind = ResponseKind::b;
  spec.k = 15;
  GibbsSampler sampler(spec, make_pa(sites, y), nullptr, raster, nullptr, PriorSpec{}, Rng(12));
  sampler.state().sigma2_omega = 1e-12;
  sampler.state().phi_omega = 1.0;
  for (int i = 0; i < n; ++i) sampler.state().z(i) = rng.normal();
  sampler.refresh_caches();
  sampler.update_omega();
  for (int i = 0; i < n; ++i) CHECK(std::abs(sampler.state().omega(i)) < 1e-4);
}

TEST_CASE("update_omega: conjugacy oracle on a tight cluster of replicates") {
  // 12 nearly coincident sites with a common residual; the posterior mean
  // of omega approaches the residual mean (shrunk by the prior)
  Rng rng(13);
  const int n = 12;
  std::vector<Location> sites;
  for (int i = 0; i < n; ++i)
    sites.push_back({2.0 + 1e-3 * rng.uniform(), 2.0 + 1e-3 * rng.uniform()});
  std::vector<int> y(n, 1);
  const auto raster = make_raster(make_grid(4, 4));
  FitSpec spec;
  spec.kind = ResponseKind::b;
  spec.k = n - 1;  // saturated: sequential update targets the dense GP posterior
  GibbsSampler sampler(spec, make_pa(sites, y), nullptr, raster, nullptr, PriorSpec{}, Rng(14));
  const double resid = 1.7;
  sampler.state().alpha.setZero();
  sampler.state().sigma2_omega = 10.0;
  sampler.state().phi_omega = 1.0;
  for (int i = 0; i < n; ++i) sampler.state().z(i) = resid;
  sampler.refresh_caches();

  const int reps = 4000;
  std::vector<double> mean_series;
  for (int r = 0; r < reps; ++r) {
    sampler.update_omega();
    mean_series.push_back(sampler.state().omega.mean());
  }
  // dense conjugate oracle: mean = (C^-1 + I)^-1 r with a stabilizing ridge
  Eigen::MatrixXd C = expcov_matrix(sites, {10.0, 1.0}, 0.0);
  C.diagonal().array() += 1e-8;
  Eigen::MatrixXd P = C.inverse();
  P.diagonal().array() += 1.0;
  const Eigen::VectorXd oracle = P.fullPivLu().solve(Eigen::VectorXd::Constant(n, resid));
  const double want = oracle.mean();
  CHECK(want > 1.5);  // close to the residual mean
  const auto tail = std::span<const double>(mean_series).subspan(500);
  CHECK(std::abs(sample_mean(tail) - want) < 4.0 * batch_se(tail) + 0.01);
}

TEST_CASE("update_omega matches a dense Gibbs oracle on a 30-site problem") {
  Rng rng(15);
  const int n = 30;
  const auto sites = random_sites(n, 5.0, 5.0, rng);
  auto raster = make_raster(make_grid(5, 5), {"w"}, [](Location s, int) { return s.x - 2.5; });
  raster = standardize_covariates(raster);
  const ExpCovParams truth{1.5, 2.0};

  // simulate responses from the model
  const auto omega_true = dense_gp_draw(sites, truth, 0.0, rng);
  std::vector<int> y(n);
  for (int i = 0; i < n; ++i) {
    const double x1 = raster.value(cell_of(sites[i], raster.grid), 0);
    y[i] = rng.uniform() < normal_cdf(0.4 + 0.7 * x1 + omega_true[i]) ? 1 : 0;
  }

  FitSpec spec;
  spec.kind = ResponseKind::b;
  spec.k = n - 1;
  PriorSpec priors;
  GibbsSampler sampler(spec, make_pa(sites, y), nullptr, raster, nullptr, priors, Rng(16));
  sampler.state().sigma2_omega = truth.sigma2;
  sampler.state().phi_omega = truth.phi;
  sampler.refresh_caches();

  const int sweeps = 6000, burn = 1000;
  Eigen::VectorXd mean_a = Eigen::VectorXd::Zero(n);
  std::vector<double> a0_series;
  for (int it = 0; it < sweeps; ++it) {
    sampler.update_z();
    sampler.update_alpha();
    sampler.update_omega();
    if (it >= burn) {
      mean_a += sampler.state().omega;
      a0_series.push_back(sampler.state().alpha(0));
    }
  }
  mean_a /= (sweeps - burn);

  // dense Gibbs oracle written independently of the library sampler
  Rng orng(17);
  const Eigen::MatrixXd C = expcov_matrix(sites, truth, 0.0);
  Eigen::MatrixXd Pw = C.inverse();
  Pw.diagonal().array() += 1.0;  // tau2 = 1
  const Eigen::LLT<Eigen::MatrixXd> llt_w(Pw);
  const Eigen::MatrixXd& X = sampler.design_x();
  Eigen::MatrixXd Pa = X.transpose() * X;
  Pa.diagonal().array() += 1.0 / priors.alpha_var;
  const Eigen::LLT<Eigen::MatrixXd> llt_a(Pa);

  Eigen::VectorXd z(n), alpha = Eigen::VectorXd::Zero(X.cols()), omega = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd mean_b = Eigen::VectorXd::Zero(n);
  std::vector<double> b0_series;
  for (int it = 0; it < sweeps; ++it) {
    const Eigen::VectorXd mu = X * alpha + omega;
    for (int i = 0; i < n; ++i)
      z(i) = y[i] == 1 ? orng.truncated_normal_lower(mu(i), 1.0, 0.0)
                       : orng.truncated_normal_upper(mu(i), 1.0, 0.0);
    {
      Eigen::VectorXd xi(alpha.size());
      for (int j = 0; j < alpha.size(); ++j) xi(j) = orng.normal();
      alpha = llt_a.solve(X.transpose() * (z - omega)) + llt_a.matrixU().solve(xi);
    }
    {
      Eigen::VectorXd xi(n);
      for (int i = 0; i < n; ++i) xi(i) = orng.normal();
      omega = llt_w.solve(z - X * alpha) + llt_w.matrixU().solve(xi);
    }
    if (it >= burn) {
      mean_b += omega;
      b0_series.push_back(alpha(0));
    }
  }
  mean_b /= (sweeps - burn);

  const double se =
      4.0 * std::sqrt(std::pow(batch_se(a0_series), 2) + std::pow(batch_se(b0_series), 2));
  CHECK(std::abs(sample_mean(a0_series) - sample_mean(b0_series)) < se + 0.02);
  double max_diff = 0.0;
  for (int i = 0; i < n; ++i) max_diff = std::max(max_diff, std::abs(mean_a(i) - mean_b(i)));
  CHECK(max_diff < 0.25);  // per-site posterior means agree within MC error
  CHECK((mean_a - mean_b).cwiseAbs().mean() < 0.08);
}

TEST_CASE("update_eta: with negligible pattern likelihood the field samples its prior") {
  const auto raster = make_raster(make_grid(5, 5));
  FitSpec spec;
  spec.kind = ResponseKind::d;
  spec.k = 24;  // saturated on 25 cells
  GibbsSampler sampler(spec, make_pa({}, {}), nullptr, raster, nullptr, PriorSpec{}, Rng(18));
  sampler.state().beta_pa(0) = -50.0;  // intensity ~ 0: the Poisson factor is flat
  sampler.state().delta_pa = 0.0;
  sampler.state().sigma2_eta_pa = 1.7;
  sampler.state().phi_eta_pa = 1.0;
  sampler.refresh_caches();

  std::vector<double> v0, v12;
  for (int it = 0; it < 30000; ++it) {
    sampler.update_eta(GibbsSampler::EtaField::pa);
    v0.push_back(sampler.state().eta_pa(0));
    v12.push_back(sampler.state().eta_pa(12));
  }
  for (auto* v : {&v0, &v12}) {
    const auto tail = std::span<const double>(*v).subspan(2000);
    CHECK(std::abs(sample_mean(tail)) < 5.0 * batch_se(tail) + 0.02);
    CHECK(sample_var(tail) == doctest::Approx(1.7).epsilon(0.20));
  }
}

TEST_CASE("update_eta matches a single-cell quadrature oracle") {
  const auto raster = make_raster(make_grid(1, 1, 2.0, 2.0));  // one cell, area 4
  std::vector<Location> sites = {{0.5, 0.5}, {1.0, 1.0}, {1.5, 0.5}};
  std::vector<int> y = {1, 1, 0};
  FitSpec spec;
  spec.kind = ResponseKind::d;
  GibbsSampler sampler(spec, make_pa(sites, y), nullptr, raster, nullptr, PriorSpec{}, Rng(19));
  const double delta = 0.9, sig2 = 2.0, b0 = 0.2, tau2 = 1.0;
  const std::vector<double> z = {0.8, 1.2, -0.4};
  sampler.state().alpha.setZero();
  sampler.state().beta_pa(0) = b0;
  sampler.state().delta_pa = delta;
  sampler.state().sigma2_eta_pa = sig2;
  for (int i = 0; i < 3; ++i) sampler.state().z(i) = z[i];
  sampler.refresh_caches();

  std::vector<double> draws;
  for (int it = 0; it < 40000; ++it) {
    sampler.update_eta(GibbsSampler::EtaField::pa);
    draws.push_back(sampler.state().eta_pa(0));
  }

  // 1-D quadrature on the exact conditional target
  const double area = 4.0;
  const long count = 3;
  auto log_target = [&](double eta) {
    double lt = count * (b0 + eta) - area * std::exp(b0 + eta);
    lt += -0.5 * eta * eta / sig2;
    for (double zs : z) lt += -0.5 * (zs - delta * eta) * (zs - delta * eta) / tau2;
    return lt;
  };
  const int m = 8000;
  const double lo = -12.0, hi = 12.0, h = (hi - lo) / m;
  double norm = 0.0, mean_num = 0.0;
  for (int i = 0; i <= m; ++i) {
    const double eta = lo + i * h;
    const double w = (i == 0 || i == m) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    const double f = w * std::exp(log_target(eta));
    norm += f;
    mean_num += f * eta;
  }
  const double want = mean_num / norm;
  const auto tail = std::span<const double>(draws).subspan(4000);
  CHECK(std::abs(sample_mean(tail) - want) < 4.0 * batch_se(tail) + 0.01);
}

TEST_CASE("update_delta: truncated delta_po stays nonnegative") {
  Rng rng(20);
  const int n = 40;
  const auto sites = random_sites(n, 4.0, 4.0, rng);
  std::vector<int> y(n);
  for (auto& v : y) v = rng.bernoulli(0.5);
  const auto raster = make_raster(make_grid(4, 4));
  PresenceOnlyDataset po;
  po.events = random_sites(30, 4.0, 4.0, rng);
  FitSpec spec;
  spec.kind = ResponseKind::d_prime;
  GibbsSampler sampler(spec, make_pa(sites, y), &po, raster, nullptr, PriorSpec{}, Rng(21));
  for (int rep = 0; rep < 300; ++rep) {
    for (int i = 0; i < n; ++i) sampler.state().z(i) = rng.normal(-1.0, 2.0);
    for (int c = 0; c < sampler.n_cells(); ++c) sampler.state().eta_po(c) = rng.normal();
    sampler.refresh_caches();
    sampler.update_delta();
    CHECK(sampler.state().delta_po >= 0.0);
  }
}

TEST_CASE("sigma2 conditional matches the closed-form inverse-gamma") {
  Rng rng(22);
  const int n = 20;
  const auto sites = random_sites(n, 4.0, 4.0, rng);
  std::vector<int> y(n, 1);
  y[0] = 0;
  const auto raster = make_raster(make_grid(4, 4));
  FitSpec spec;
  spec.kind = ResponseKind::b;
  spec.k = n - 1;  // saturated so the quadform has a dense counterpart
  PriorSpec priors;  // IG(2, 0.1)
  GibbsSampler sampler(spec, make_pa(sites, y), nullptr, raster, nullptr, priors, Rng(23));
  const double phi = 1.3;
  sampler.state().phi_omega = phi;
  for (int i = 0; i < n; ++i) sampler.state().omega(i) = rng.normal(0.0, 1.1);
  sampler.refresh_caches();

  // dense-route quadform: omega' R^-1 omega at unit variance
  const Eigen::MatrixXd R = expcov_matrix(sites, {1.0, phi}, 0.0);
  const double qf = sampler.state().omega.dot(R.fullPivLu().solve(sampler.state().omega));
  const double shape = priors.sigma2_shape + 0.5 * n;
  const double rate = priors.sigma2_rate + 0.5 * qf;

  const int reps = 20000;
  double recip_sum = 0.0;
  for (int r = 0; r < reps; ++r) {
    sampler.update_variances();
    recip_sum += 1.0 / sampler.state().sigma2_omega;
    // keep the conditioning state fixed
    sampler.state().sigma2_omega = 1.0;
  }
  const double recip_mean = recip_sum / reps;  // E[1/sigma2] = shape / rate
  const double want = shape / rate;
  const double se = std::sqrt(shape / (rate * rate) / reps);
  CHECK(std::abs(recip_mean - want) < 4.0 * se);

  SUBCASE("zero field reduces to IG(shape + n/2, rate)") {
    sampler.state().omega.setZero();
    sampler.refresh_caches();
    double rsum = 0.0;
    for (int r = 0; r < reps; ++r) {
      sampler.update_variances();
      rsum += 1.0 / sampler.state().sigma2_omega;
    }
    const double w = (priors.sigma2_shape + 0.5 * n) / priors.sigma2_rate;
    const double se0 =
        std::sqrt((priors.sigma2_shape + 0.5 * n) / (priors.sigma2_rate * priors.sigma2_rate) /
                  reps);
    CHECK(std::abs(rsum / reps - w) < 4.0 * se0);
  }
}

TEST_CASE("model (a): posterior mean recovers the truth on n = 2000") {
  Rng rng(24);
  const int n = 2000;
  const GridSpec grid = make_grid(10, 10);
  auto raster = make_raster(grid, {"w1", "w2"}, [&](Location s, int j) {
    return j == 0 ? std::sin(0.9 * s.x) + 0.1 * s.y : std::cos(1.3 * s.y) - 0.05 * s.x;
  });
  raster = standardize_covariates(raster);
  const std::vector<double> alpha_true = {0.3, -0.5, 0.8};
  const auto sites = random_sites(n, 10.0, 10.0, rng);
  std::vector<int> y(n);
  for (int i = 0; i < n; ++i) {
    const int c = cell_of(sites[i], grid);
    const double mu = alpha_true[0] + alpha_true[1] * raster.value(c, 0) +
                      alpha_true[2] * raster.value(c, 1);
    y[i] = rng.uniform() < normal_cdf(mu) ? 1 : 0;
  }
  FitSpec spec;
  spec.kind = ResponseKind::a;
  ChainConfig chain;
  chain.burn_in = 300;
  chain.keep = 600;
  chain.seed = 71;
  const auto arch = fit(spec, make_pa(sites, y), nullptr, raster, nullptr, PriorSpec{}, chain);
  const char* names[] = {"alpha.const", "alpha.w1", "alpha.w2"};
  for (int j = 0; j < 3; ++j) {
    const auto& draws = arch.scalar_draws[arch.scalar_index(names[j])];
    const double mean = sample_mean(draws);
    const double sd = std::sqrt(sample_var(draws));
    CHECK(std::abs(mean - alpha_true[j]) < 2.0 * sd);
  }
}

TEST_CASE("fit is deterministic and thread-count independent") {
  Rng rng(25);
  const auto result = [&] {
    const auto sites = random_sites(60, 10.0, 10.0, rng);
    std::vector<int> y(60);
    for (auto& v : y) v = rng.bernoulli(0.4);
    return make_pa(sites, y);
  }();
  const auto raster = make_raster(make_grid(8, 8, 1.25, 1.25));
  FitSpec spec;
  spec.kind = ResponseKind::d;
  ChainConfig chain;
  chain.burn_in = 50;
  chain.keep = 50;
  chain.seed = 1234;
  chain.n_chains = 2;

  chain.threads = 1;
  const auto arch_a = fit(spec, result, nullptr, raster, nullptr, PriorSpec{}, chain);
  chain.threads = 2;
  const auto arch_b = fit(spec, result, nullptr, raster, nullptr, PriorSpec{}, chain);
  const auto arch_c = fit(spec, result, nullptr, raster, nullptr, PriorSpec{}, chain);

  REQUIRE(arch_a.scalar_draws.size() == arch_b.scalar_draws.size());
  CHECK(arch_a.scalar_draws == arch_b.scalar_draws);
  CHECK(arch_b.scalar_draws == arch_c.scalar_draws);
  CHECK(arch_a.eta_pa_draws == arch_b.eta_pa_draws);
  CHECK(arch_a.n_draws() == 100);
}

TEST_CASE("fit validation: node/data consistency") {
  Rng rng(26);
  const auto sites = random_sites(20, 4.0, 4.0, rng);
  std::vector<int> y(20);
  for (auto& v : y) v = rng.bernoulli(0.5);
  const auto pa = make_pa(sites, y);
  const auto raster = make_raster(make_grid(4, 4));
  PresenceOnlyDataset po;
  po.events = random_sites(10, 4.0, 4.0, rng);
  ChainConfig chain;
  chain.burn_in = 1;
  chain.keep = 1;

  FitSpec spec;
  spec.kind = ResponseKind::e;
  CHECK_THROWS_AS(fit(spec, pa, nullptr, raster, nullptr, PriorSpec{}, chain), ValidationError);
  spec.kind = ResponseKind::a;
  CHECK_THROWS_AS(fit(spec, pa, &po, raster, nullptr, PriorSpec{}, chain), ValidationError);
  spec.kind = ResponseKind::d;
  spec.intensity_pa = IntensityKind::nhpp_i;
  CHECK_THROWS_AS(fit(spec, pa, nullptr, raster, nullptr, PriorSpec{}, chain), ValidationError);
}

TEST_CASE("fit: impossible data under zero support fails at initialization") {
  Rng rng(27);
  const auto sites = random_sites(15, 4.0, 4.0, rng);
  std::vector<int> y(15);
  for (auto& v : y) v = rng.bernoulli(0.5);
  const auto raster = make_raster(make_grid(2, 2, 2.0, 2.0));
  PresenceOnlyDataset po;
  po.events = {{1.0, 1.0}};  // lands in cell 0
  // zero sampling probability everywhere: the observed event is impossible
  const DegradationLayers layers(std::vector<double>(4, 1.0), std::vector<double>(4, 0.0));
  FitSpec spec;
  spec.kind = ResponseKind::d_prime;
  ChainConfig chain;
  chain.burn_in = 1;
  chain.keep = 1;
  CHECK_THROWS_WITH_AS(fit(spec, make_pa(sites, y), &po, raster, &layers, PriorSpec{}, chain),
                       doctest::Contains("initialization"), NumericalError);
}
