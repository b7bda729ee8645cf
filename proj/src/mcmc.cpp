#include "prefsdm/mcmc.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

#include "prefsdm/io.hpp"
#include "prefsdm/kernels.hpp"
#include "prefsdm/mathutil.hpp"

namespace prefsdm {

void PriorSpec::validate() const {
  if (!(alpha_var > 0.0) || !(beta_var > 0.0) || !(delta_var > 0.0))
    throw ValidationError("prior variances must be strictly positive");
  if (!(sigma2_shape > 0.0) || !(sigma2_rate > 0.0))
    throw ValidationError("inverse-gamma prior parameters must be strictly positive");
  if (!(phi_lo < phi_hi) || phi_lo < 0.0)
    throw ValidationError("decay prior bounds must satisfy 0 <= lo < hi");
}

void ChainConfig::validate() const {
  if (burn_in < 0 || keep < 0) throw ValidationError("burn_in and keep must be nonnegative");
  if (thin < 1 || field_thin < 1) throw ValidationError("thinning factors must be >= 1");
  if (n_chains < 1) throw ValidationError("n_chains must be >= 1");
  if (adapt_window < 1) throw ValidationError("adapt_window must be >= 1");
}

// ------------------------------------------------------------------ ESS

EssResult effective_sample_size(std::span<const double> draws) {
  const std::size_t n = draws.size();
  if (n < 10) throw ValidationError("effective_sample_size requires at least 10 draws");
  const auto [lo, hi] = std::minmax_element(draws.begin(), draws.end());
  if (*lo == *hi) return {1.0, true};
  double mean = 0.0;
  for (double v : draws) mean += v;
  mean /= n;
  double c0 = 0.0;
  for (double v : draws) c0 += (v - mean) * (v - mean);
  c0 /= n;
  if (c0 <= 0.0) return {1.0, true};

  auto rho = [&](std::size_t t) {
    double c = 0.0;
    for (std::size_t i = 0; i + t < n; ++i) c += (draws[i] - mean) * (draws[i + t] - mean);
    return c / n / c0;
  };

  // sum autocorrelations by consecutive pairs until the first pair turns
  // non-positive (initial-positive-sequence rule)
  double s = 0.0;
  for (std::size_t t = 1; t + 1 < n; t += 2) {
    const double pair = rho(t) + rho(t + 1);
    if (pair <= 0.0) break;
    s += pair;
  }
  return {static_cast<double>(n) / (1.0 + 2.0 * s), false};
}

// ------------------------------------------------------ sampler internals

struct GibbsSampler::EtaBlock {
  EtaField which = EtaField::pa;
  std::string tag;  // "pa" or "po"
  Eigen::MatrixXd W;  // N x (1 + p_w)
  std::vector<long> counts;
  Eigen::VectorXd counts_d;
  Eigen::VectorXd aq;  // area * q
  std::vector<double> area;
  const DegradationLayers* layers = nullptr;  // po only
  NngpFactor factor;    // correlation scale (sigma2 = 1)
  Eigen::VectorXd o;    // W beta
  Eigen::VectorXd lam;  // exp(o + eta): potential intensity at cells
  std::vector<double> step_eta;
  std::vector<long> acc_eta;  // accepts since last adapt batch
  std::vector<double> step_beta;
  std::vector<long> acc_beta;
  double step_level = 1.0;
  long acc_level = 0;
  double step_scale = 0.3;
  long acc_scale = 0;
  std::vector<std::vector<int>> sites_in_cell;
};

namespace {

Eigen::MatrixXd build_design(const CovariateRaster& raster, std::span<const int> cells,
                             const std::vector<std::string>& cov_names) {
  const std::size_t p = cov_names.size();
  std::vector<std::size_t> cols(p);
  for (std::size_t j = 0; j < p; ++j) {
    const auto it = std::find(raster.names.begin(), raster.names.end(), cov_names[j]);
    if (it == raster.names.end())
      throw ValidationError("covariate '" + cov_names[j] + "' not present in the raster");
    cols[j] = static_cast<std::size_t>(it - raster.names.begin());
  }
  Eigen::MatrixXd X(cells.size(), p + 1);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    X(i, 0) = 1.0;
    for (std::size_t j = 0; j < p; ++j) X(i, j + 1) = raster.value(cells[i], cols[j]);
  }
  return X;
}

double reflect_into(double v, double lo, double hi) {
  const double span = hi - lo;
  while (v < lo || v > hi) {
    if (v < lo) v = 2.0 * lo - v;
    if (v > hi) v = 2.0 * hi - v;
    if (!std::isfinite(v)) return lo + 0.5 * span;
  }
  return v;
}

void nudge_step(double& step, double rate, long batch_no) {
  const double delta = std::min(0.1, 1.0 / std::sqrt(static_cast<double>(batch_no)));
  step *= std::exp(rate > 0.44 ? delta : -delta);
  step = std::clamp(step, 1e-6, 1e6);
}

}  // namespace

GibbsSampler::~GibbsSampler() = default;

GibbsSampler::GibbsSampler(const FitSpec& spec, const PresenceAbsenceDataset& pa,
                           const PresenceOnlyDataset* po, const CovariateRaster& raster,
                           const DegradationLayers* layers, const PriorSpec& priors, Rng rng)
    : spec_(spec), priors_(priors), rng_(rng) {
  priors_.validate();
  raster.validate();
  if (!(spec_.tau2 > 0.0)) throw ValidationError("tau2 must be strictly positive");
  if (spec_.k < 0) throw ValidationError("neighbor count k must be nonnegative");

  const ResponseKind kind = spec_.kind;
  if (needs_po_data(kind) && po == nullptr)
    throw ValidationError(std::string("model (") + response_kind_name(kind) +
                          ") requires a presence-only dataset");
  if (!needs_po_data(kind) && po != nullptr)
    throw ValidationError(std::string("model (") + response_kind_name(kind) +
                          ") does not use a presence-only dataset");
  if (has_eta_pa(kind) && spec_.intensity_pa != IntensityKind::lgcp_ii)
    throw ValidationError("intensity model (ii) is required when eta enters the response");
  if (has_eta_po(kind) && spec_.intensity_po != IntensityKind::lgcp_ii)
    throw ValidationError("intensity model (ii) is required when eta_po enters the response");
  if (layers && layers->n_cells() != raster.grid.n_cells())
    throw ValidationError("degradation layers do not match the grid");

  const int n = static_cast<int>(pa.sites.size());
  n_cells_ = raster.grid.n_cells();

  y_.resize(n);
  site_cells_.resize(n);
  std::vector<Location> site_locs(n);
  for (int i = 0; i < n; ++i) {
    y_[i] = pa.sites[i].y;
    site_locs[i] = pa.sites[i].loc;
    site_cells_[i] = cell_of(pa.sites[i].loc, raster.grid);
  }

  x_names_ = spec_.x_covariates.empty() ? raster.names : spec_.x_covariates;
  w_names_ = spec_.w_covariates.empty() ? raster.names : spec_.w_covariates;
  X_ = build_design(raster, site_cells_, x_names_);
  XtX_ = X_.transpose() * X_;

  if (n > 0) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X_);
    qr.setThreshold(1e-10);
    if (qr.rank() < X_.cols()) {
      std::ostringstream msg;
      msg << "design matrix is rank deficient; collinear columns:";
      const auto& perm = qr.colsPermutation().indices();
      for (int j = qr.rank(); j < X_.cols(); ++j) {
        const int col = perm(j);
        msg << " " << (col == 0 ? "const" : x_names_[col - 1]);
      }
      throw ValidationError(msg.str());
    }
  }

  if (has_omega(kind)) {
    if (n < 1) throw ValidationError("omega models need at least one site");
    omega_ws_ = std::make_unique<NngpWorkspace>(
        site_locs,
        build_nngp_index(site_locs, std::min<int>(spec_.k, n - 1), spec_.ordering));
    state_.omega = Eigen::VectorXd::Zero(n);
  }

  std::vector<int> all_cells(n_cells_);
  std::iota(all_cells.begin(), all_cells.end(), 0);

  auto make_block = [&](EtaField which, std::span<const Location> events) {
    auto blk = std::make_unique<EtaBlock>();
    blk->which = which;
    blk->tag = which == EtaField::pa ? "pa" : "po";
    blk->W = build_design(raster, all_cells, w_names_);
    auto cc = counts_per_cell(events, raster.grid);
    blk->counts = cc.counts;
    blk->counts_d.resize(n_cells_);
    blk->aq.resize(n_cells_);
    blk->area.assign(n_cells_, raster.grid.cell_area());
    blk->layers = which == EtaField::po ? layers : nullptr;
    for (int c = 0; c < n_cells_; ++c) {
      blk->counts_d(c) = static_cast<double>(blk->counts[c]);
      const double q = blk->layers ? blk->layers->q(c) : 1.0;
      blk->aq(c) = blk->area[c] * q;
    }
    blk->step_eta.assign(n_cells_, 0.5);
    blk->acc_eta.assign(n_cells_, 0);
    blk->step_beta.assign(w_names_.size() + 1, 0.1);
    blk->acc_beta.assign(w_names_.size() + 1, 0);
    blk->sites_in_cell.resize(n_cells_);
    for (int i = 0; i < n; ++i) blk->sites_in_cell[site_cells_[i]].push_back(i);
    return blk;
  };

  if (has_eta_pa(kind) || has_eta_po(kind)) {
    std::vector<Location> centroids(n_cells_);
    for (int c = 0; c < n_cells_; ++c) centroids[c] = raster.grid.centroid(c);
    cell_ws_ = std::make_unique<NngpWorkspace>(
        centroids,
        build_nngp_index(centroids, std::min<int>(spec_.k, n_cells_ - 1), spec_.ordering));
  }
  if (has_eta_pa(kind)) {
    pa_block_ = make_block(EtaField::pa, site_locs);
    state_.eta_pa = Eigen::VectorXd::Zero(n_cells_);
  }
  if (has_eta_po(kind)) {
    po_block_ = make_block(EtaField::po, po->events);
    state_.eta_po = Eigen::VectorXd::Zero(n_cells_);
  }

  // moment-based probit start for alpha; fields at zero; decays mid-prior;
  // intensity intercepts from the observed event rate
  const int p = static_cast<int>(X_.cols());
  state_.alpha = Eigen::VectorXd::Zero(p);
  if (n > 0) {
    Eigen::VectorXd t(n);
    for (int i = 0; i < n; ++i) t(i) = inv_normal_cdf(0.25 + 0.5 * y_[i]);
    state_.alpha = XtX_.ldlt().solve(X_.transpose() * t);
  }
  state_.z.resize(n);
  for (int i = 0; i < n; ++i)
    state_.z(i) = y_[i] == 1 ? 0.6744897501960817 : -0.6744897501960817;

  const double phi0 = 0.5 * (priors_.phi_lo + priors_.phi_hi);
  state_.phi_omega = phi0;
  state_.phi_eta_pa = phi0;
  state_.phi_eta_po = phi0;

  step_alpha_.assign(p, 0.5);
  acc_alpha_.assign(p, 0);

  auto init_beta = [&](EtaBlock& blk) {
    const long total = std::accumulate(blk.counts.begin(), blk.counts.end(), 0L);
    double mass = 0.0;
    for (int c = 0; c < n_cells_; ++c) mass += blk.aq(c);
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(blk.W.cols());
    beta(0) = std::log((total + 0.5) / std::max(mass, 1e-12));
    return beta;
  };
  if (pa_block_) state_.beta_pa = init_beta(*pa_block_);
  if (po_block_) state_.beta_po = init_beta(*po_block_);

  refresh_caches();
}

GibbsSampler::EtaBlock& GibbsSampler::block(EtaField which) {
  auto* blk = which == EtaField::pa ? pa_block_.get() : po_block_.get();
  if (!blk) throw ValidationError("model has no eta field for this pattern");
  return *blk;
}

const GibbsSampler::EtaBlock& GibbsSampler::block(EtaField which) const {
  const auto* blk = which == EtaField::pa ? pa_block_.get() : po_block_.get();
  if (!blk) throw ValidationError("model has no eta field for this pattern");
  return *blk;
}

bool GibbsSampler::has_eta(EtaField which) const {
  return which == EtaField::pa ? pa_block_ != nullptr : po_block_ != nullptr;
}

void GibbsSampler::rebuild_omega_factor() {
  if (omega_ws_) omega_factor_ = omega_ws_->factor({1.0, state_.phi_omega}, 0.0);
}

void GibbsSampler::rebuild_factor(EtaField which) {
  auto& blk = block(which);
  const double phi = which == EtaField::pa ? state_.phi_eta_pa : state_.phi_eta_po;
  blk.factor = cell_ws_->factor({1.0, phi}, 0.0);
}

void GibbsSampler::refresh_caches() {
  const int n = n_sites();
  xa_ = X_ * state_.alpha;
  auto refresh_block = [&](EtaBlock& blk, const Eigen::VectorXd& beta, const Eigen::VectorXd& eta,
                           Eigen::VectorXd& h) {
    blk.o = blk.W * beta;
    blk.lam.resize(n_cells_);
    const Eigen::VectorXd tmp = blk.o + eta;
    kernels::ops().exp_v(tmp.data(), blk.lam.data(), n_cells_);
    h.resize(n);
    for (int i = 0; i < n; ++i) h(i) = eta(site_cells_[i]);
  };
  if (pa_block_) refresh_block(*pa_block_, state_.beta_pa, state_.eta_pa, h_pa_);
  if (po_block_) refresh_block(*po_block_, state_.beta_po, state_.eta_po, h_po_);
  rebuild_omega_factor();
  if (pa_block_) rebuild_factor(EtaField::pa);
  if (po_block_) rebuild_factor(EtaField::po);
}

void GibbsSampler::set_responses(std::span<const int> y) {
  if (static_cast<int>(y.size()) != n_sites())
    throw ValidationError("response vector length mismatch");
  for (int v : y)
    if (v != 0 && v != 1) throw ValidationError("responses must be 0 or 1");
  std::copy(y.begin(), y.end(), y_.begin());
}

Eigen::VectorXd GibbsSampler::latent_mean() const {
  Eigen::VectorXd mu = xa_;
  if (pa_block_) mu += state_.delta_pa * h_pa_;
  if (po_block_) mu += state_.delta_po * h_po_;
  if (omega_ws_) mu += state_.omega;
  return mu;
}

void GibbsSampler::update_z() {
  const Eigen::VectorXd mu = latent_mean();
  for (int i = 0; i < n_sites(); ++i)
    state_.z(i) = draw_truncated_z(mu(i), spec_.tau2, y_[i], rng_);
}

namespace {

double bernoulli_loglik(const Eigen::VectorXd& mu, std::span<const int> y, double tau2) {
  const double inv_sd = 1.0 / std::sqrt(tau2);
  double ll = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    double p = normal_cdf(mu(static_cast<int>(i)) * inv_sd);
    p = std::clamp(p, 1e-300, 1.0 - 1e-16);
    ll += y[i] == 1 ? std::log(p) : std::log1p(-p);
  }
  return ll;
}

double corr_quadform(const Eigen::VectorXd& values, const NngpIndex& idx,
                     const NngpFactor& factor) {
  const int k = std::max(idx.k, 1);
  double qf = 0.0;
  for (int pos = 0; pos < idx.n(); ++pos) {
    double cm = 0.0;
    for (int t = 0; t < idx.n_nbr[pos]; ++t)
      cm += factor.coef[pos * k + t] * values(idx.order[idx.nbr[pos * k + t]]);
    const double d = values(idx.order[pos]) - cm;
    qf += d * d / factor.cond_var[pos];
  }
  return qf;
}

}  // namespace

void GibbsSampler::update_alpha_marginal() {
  // MH against the z-integrated Bernoulli likelihood; z is redrawn from
  // its full conditional immediately afterwards (partially collapsed)
  if (n_sites() == 0) return;
  auto& counter = counters_["alpha_marg_mh"];
  Eigen::VectorXd mu = latent_mean();
  double cur_ll = bernoulli_loglik(mu, y_, spec_.tau2);
  for (int j = 0; j < state_.alpha.size(); ++j) {
    ++counter.second;
    const double cur = state_.alpha(j);
    const double prop = cur + step_alpha_[j] * rng_.normal();
    const Eigen::VectorXd mu_prop = mu + (prop - cur) * X_.col(j);
    const double prop_ll = bernoulli_loglik(mu_prop, y_, spec_.tau2);
    const double prior = -0.5 * (prop * prop - cur * cur) / priors_.alpha_var;
    if (std::log(rng_.uniform_pos()) < prop_ll - cur_ll + prior) {
      ++counter.first;
      ++acc_alpha_[j];
      state_.alpha(j) = prop;
      mu = mu_prop;
      cur_ll = prop_ll;
    }
  }
  xa_ = X_ * state_.alpha;
}

void GibbsSampler::update_omega_level() {
  // shift m between the intercept and the field level; the latent mean
  // (hence the z factor) is exactly invariant
  if (!omega_ws_) return;
  auto& counter = counters_["level_omega_mh"];
  ++counter.second;
  const double m = step_level_omega_ * rng_.normal();
  const double a0 = state_.alpha(0);
  const Eigen::VectorXd shifted = state_.omega.array() - m;
  const double dq = corr_quadform(shifted, omega_ws_->index(), omega_factor_) -
                    corr_quadform(state_.omega, omega_ws_->index(), omega_factor_);
  double lr = -0.5 * dq / state_.sigma2_omega;
  lr += -0.5 * ((a0 + m) * (a0 + m) - a0 * a0) / priors_.alpha_var;
  if (std::log(rng_.uniform_pos()) < lr) {
    ++counter.first;
    ++acc_level_omega_;
    state_.alpha(0) = a0 + m;
    state_.omega = shifted;
    xa_.array() += m;
  }
}

void GibbsSampler::update_eta_level(EtaField which) {
  // shift m between the intensity intercept and the field level; the
  // alpha intercept compensates so delta * eta at sites is unchanged
  auto& blk = block(which);
  Eigen::VectorXd& eta = which == EtaField::pa ? state_.eta_pa : state_.eta_po;
  Eigen::VectorXd& beta = which == EtaField::pa ? state_.beta_pa : state_.beta_po;
  Eigen::VectorXd& h = which == EtaField::pa ? h_pa_ : h_po_;
  const double delta = which == EtaField::pa ? state_.delta_pa : state_.delta_po;
  const double s2 = which == EtaField::pa ? state_.sigma2_eta_pa : state_.sigma2_eta_po;
  auto& counter = counters_["level_" + blk.tag + "_mh"];
  ++counter.second;

  const double m = blk.step_level * rng_.normal();
  const Eigen::VectorXd shifted = eta.array() - m;
  const double dq = corr_quadform(shifted, cell_ws_->index(), blk.factor) -
                    corr_quadform(eta, cell_ws_->index(), blk.factor);
  double lr = -0.5 * dq / s2;
  const double b0 = beta(0);
  lr += -0.5 * ((b0 + m) * (b0 + m) - b0 * b0) / priors_.beta_var;
  const double a0 = state_.alpha(0);
  const double a0p = a0 + delta * m;
  lr += -0.5 * (a0p * a0p - a0 * a0) / priors_.alpha_var;
  if (std::log(rng_.uniform_pos()) < lr) {
    ++counter.first;
    ++blk.acc_level;
    beta(0) = b0 + m;
    eta = shifted;
    state_.alpha(0) = a0p;
    blk.o.array() += m;
    h.array() -= m;
    xa_.array() += delta * m;
    // o + eta is analytically unchanged; refresh the cache for exactness
    const Eigen::VectorXd tmp = blk.o + eta;
    kernels::ops().exp_v(tmp.data(), blk.lam.data(), n_cells_);
  }
}

void GibbsSampler::update_eta_scale(EtaField which) {
  // rescale (eta, sigma2) by c and delta by 1/c: delta * eta and the
  // prior quadform are invariant, so only the point-pattern likelihood,
  // the scalar priors and the Jacobian c^(N+1) enter the ratio
  auto& blk = block(which);
  Eigen::VectorXd& eta = which == EtaField::pa ? state_.eta_pa : state_.eta_po;
  Eigen::VectorXd& h = which == EtaField::pa ? h_pa_ : h_po_;
  double& delta = which == EtaField::pa ? state_.delta_pa : state_.delta_po;
  double& s2 = which == EtaField::pa ? state_.sigma2_eta_pa : state_.sigma2_eta_po;
  auto& counter = counters_["scale_" + blk.tag + "_mh"];
  ++counter.second;

  const double t = blk.step_scale * rng_.normal();
  const double c = std::exp(t);
  const Eigen::VectorXd eta_prop = c * eta;
  const Eigen::VectorXd tmp = blk.o + eta_prop;
  Eigen::VectorXd lam_prop(n_cells_);
  kernels::ops().exp_v(tmp.data(), lam_prop.data(), n_cells_);
  double lr = blk.counts_d.dot(tmp) - blk.aq.dot(lam_prop) -
              (blk.counts_d.dot(Eigen::VectorXd(blk.o + eta)) - blk.aq.dot(blk.lam));

  const double s2_prop = c * c * s2;
  lr += -(priors_.sigma2_shape + 1.0) * (std::log(s2_prop) - std::log(s2)) -
        priors_.sigma2_rate * (1.0 / s2_prop - 1.0 / s2);
  const double d_prop = delta / c;
  lr += -0.5 * (d_prop * d_prop - delta * delta) / priors_.delta_var;
  // field-prior normalizer shifts by -N t; the Jacobian adds (N + 1) t
  lr += t;
  if (std::log(rng_.uniform_pos()) < lr) {
    ++counter.first;
    ++blk.acc_scale;
    eta = eta_prop;
    delta = d_prop;
    s2 = s2_prop;
    blk.lam = std::move(lam_prop);
    h *= c;
  }
}

std::pair<Eigen::VectorXd, Eigen::MatrixXd> GibbsSampler::alpha_conditional() const {
  Eigen::VectorXd r = state_.z;
  if (pa_block_) r -= state_.delta_pa * h_pa_;
  if (po_block_) r -= state_.delta_po * h_po_;
  if (omega_ws_) r -= state_.omega;

  Eigen::MatrixXd P = XtX_ / spec_.tau2;
  P.diagonal().array() += 1.0 / priors_.alpha_var;
  Eigen::LLT<Eigen::MatrixXd> llt(P);
  if (llt.info() != Eigen::Success)
    throw NumericalError("alpha conditional precision not positive definite");
  const Eigen::VectorXd mean = llt.solve(Eigen::VectorXd(X_.transpose() * r / spec_.tau2));
  const int p = static_cast<int>(X_.cols());
  const Eigen::MatrixXd cov = llt.solve(Eigen::MatrixXd::Identity(p, p));
  return {mean, cov};
}

void GibbsSampler::update_alpha() {
  const int p = static_cast<int>(X_.cols());
  Eigen::VectorXd r = state_.z;
  if (pa_block_) r -= state_.delta_pa * h_pa_;
  if (po_block_) r -= state_.delta_po * h_po_;
  if (omega_ws_) r -= state_.omega;

  Eigen::MatrixXd P = XtX_ / spec_.tau2;
  P.diagonal().array() += 1.0 / priors_.alpha_var;
  Eigen::LLT<Eigen::MatrixXd> llt(P);
  if (llt.info() != Eigen::Success)
    throw NumericalError("alpha conditional precision not positive definite");
  const Eigen::VectorXd mean = llt.solve(Eigen::VectorXd(X_.transpose() * r / spec_.tau2));
  Eigen::VectorXd xi(p);
  for (int j = 0; j < p; ++j) xi(j) = rng_.normal();
  state_.alpha = mean + llt.matrixU().solve(xi);
  xa_ = X_ * state_.alpha;
}

void GibbsSampler::update_omega() {
  if (!omega_ws_) throw ValidationError("model has no omega field");
  const auto& idx = omega_ws_->index();
  const int k = std::max(idx.k, 1);
  Eigen::VectorXd r = state_.z - xa_;
  if (pa_block_) r -= state_.delta_pa * h_pa_;
  if (po_block_) r -= state_.delta_po * h_po_;

  const double s2 = state_.sigma2_omega;
  const double tau2 = spec_.tau2;
  auto& w = state_.omega;
  for (int pos = 0; pos < idx.n(); ++pos) {
    const int site = idx.order[pos];
    double cm = 0.0;
    for (int t = 0; t < idx.n_nbr[pos]; ++t)
      cm += omega_factor_.coef[pos * k + t] * w(idx.order[idx.nbr[pos * k + t]]);
    double prec = 1.0 / (s2 * omega_factor_.cond_var[pos]);
    double num = cm * prec;
    for (const auto& [dep, slot] : omega_ws_->dependents(pos)) {
      const double fv = s2 * omega_factor_.cond_var[dep];
      const double bsl = omega_factor_.coef[dep * k + slot];
      double e = w(idx.order[dep]);
      for (int t = 0; t < idx.n_nbr[dep]; ++t) {
        if (t == slot) continue;
        e -= omega_factor_.coef[dep * k + t] * w(idx.order[idx.nbr[dep * k + t]]);
      }
      num += bsl * e / fv;
      prec += bsl * bsl / fv;
    }
    num += r(site) / tau2;
    prec += 1.0 / tau2;
    w(site) = num / prec + rng_.normal() / std::sqrt(prec);
  }
}

void GibbsSampler::update_eta(EtaField which) {
  auto& blk = block(which);
  const auto& idx = cell_ws_->index();
  const int k = std::max(idx.k, 1);
  Eigen::VectorXd& eta = which == EtaField::pa ? state_.eta_pa : state_.eta_po;
  Eigen::VectorXd& h = which == EtaField::pa ? h_pa_ : h_po_;
  const double delta = which == EtaField::pa ? state_.delta_pa : state_.delta_po;
  const double s2 = which == EtaField::pa ? state_.sigma2_eta_pa : state_.sigma2_eta_po;
  const double tau2 = spec_.tau2;

  // probit residuals excluding this field's own delta * eta term
  Eigen::VectorXd res = state_.z - xa_;
  if (pa_block_ && which != EtaField::pa) res -= state_.delta_pa * h_pa_;
  if (po_block_ && which != EtaField::po) res -= state_.delta_po * h_po_;
  if (omega_ws_) res -= state_.omega;

  auto& counter = counters_["eta_" + blk.tag + "_mh"];
  for (int pos = 0; pos < idx.n(); ++pos) {
    const int c = idx.order[pos];
    const double cur = eta(c);
    const double prop = cur + blk.step_eta[c] * rng_.normal();

    // point-pattern term: n_c (eta' - eta) - a_c q_c (lam' - lam)
    const double lam_prop = std::exp(blk.o(c) + prop);
    double lr = blk.counts_d(c) * (prop - cur) - blk.aq(c) * (lam_prop - blk.lam(c));

    // own sequential prior term
    double cm = 0.0;
    for (int t = 0; t < idx.n_nbr[pos]; ++t)
      cm += blk.factor.coef[pos * k + t] * eta(idx.order[idx.nbr[pos * k + t]]);
    const double fv = s2 * blk.factor.cond_var[pos];
    lr += -0.5 * ((prop - cm) * (prop - cm) - (cur - cm) * (cur - cm)) / fv;

    // cells conditioning on this one
    for (const auto& [dep, slot] : cell_ws_->dependents(pos)) {
      const double fdep = s2 * blk.factor.cond_var[dep];
      const double bsl = blk.factor.coef[dep * k + slot];
      double cmd = 0.0;
      for (int t = 0; t < idx.n_nbr[dep]; ++t)
        cmd += blk.factor.coef[dep * k + t] * eta(idx.order[idx.nbr[dep * k + t]]);
      const double vd = eta(idx.order[dep]);
      const double cmd_prop = cmd + bsl * (prop - cur);
      lr += -0.5 * ((vd - cmd_prop) * (vd - cmd_prop) - (vd - cmd) * (vd - cmd)) / fdep;
    }

    // probit contribution through delta * eta at member sites
    for (int s : blk.sites_in_cell[c]) {
      const double rp = res(s) - delta * prop;
      const double rc = res(s) - delta * cur;
      lr += -0.5 * (rp * rp - rc * rc) / tau2;
    }

    ++counter.second;
    if (std::log(rng_.uniform_pos()) < lr) {
      ++counter.first;
      ++blk.acc_eta[c];
      eta(c) = prop;
      blk.lam(c) = lam_prop;
      for (int s : blk.sites_in_cell[c]) h(s) = prop;
    }
  }
}

void GibbsSampler::update_delta() {
  const double tau2 = spec_.tau2;
  if (pa_block_) {
    Eigen::VectorXd r = state_.z - xa_;
    if (po_block_) r -= state_.delta_po * h_po_;
    if (omega_ws_) r -= state_.omega;
    const double prec = h_pa_.squaredNorm() / tau2 + 1.0 / priors_.delta_var;
    const double mean = h_pa_.dot(r) / tau2 / prec;
    state_.delta_pa = mean + rng_.normal() / std::sqrt(prec);
  }
  if (po_block_) {
    Eigen::VectorXd r = state_.z - xa_;
    if (pa_block_) r -= state_.delta_pa * h_pa_;
    if (omega_ws_) r -= state_.omega;
    const double prec = h_po_.squaredNorm() / tau2 + 1.0 / priors_.delta_var;
    const double mean = h_po_.dot(r) / tau2 / prec;
    const double sd = 1.0 / std::sqrt(prec);
    state_.delta_po = priors_.delta_po_truncated ? rng_.truncated_normal_lower(mean, sd, 0.0)
                                                 : rng_.normal(mean, sd);
  }
}

double GibbsSampler::corr_logpdf(const Eigen::VectorXd& values, const NngpWorkspace& ws,
                                 const NngpFactor& factor, double sigma2) const {
  const int n = ws.n();
  const double qf = corr_quadform(values, ws.index(), factor);
  return -0.5 * (n * (kLog2Pi + std::log(sigma2)) + factor.log_det() + qf / sigma2);
}

void GibbsSampler::update_variances() {
  // conjugate inverse-gamma given the field and its factorization
  if (omega_ws_) {
    const double qf = corr_quadform(state_.omega, omega_ws_->index(), omega_factor_);
    state_.sigma2_omega = rng_.inverse_gamma(priors_.sigma2_shape + 0.5 * omega_ws_->n(),
                                             priors_.sigma2_rate + 0.5 * qf);
  }
  if (pa_block_) {
    const double qf = corr_quadform(state_.eta_pa, cell_ws_->index(), pa_block_->factor);
    state_.sigma2_eta_pa = rng_.inverse_gamma(priors_.sigma2_shape + 0.5 * n_cells_,
                                              priors_.sigma2_rate + 0.5 * qf);
  }
  if (po_block_) {
    const double qf = corr_quadform(state_.eta_po, cell_ws_->index(), po_block_->factor);
    state_.sigma2_eta_po = rng_.inverse_gamma(priors_.sigma2_shape + 0.5 * n_cells_,
                                              priors_.sigma2_rate + 0.5 * qf);
  }
}

void GibbsSampler::update_decays() {
  // random-walk MH with reflection at the uniform prior bounds; the
  // correlation-scale factor is rebuilt per proposal from cached distances
  auto step_one = [&](double& phi, double& step, long& acc, const Eigen::VectorXd& field,
                      const NngpWorkspace& ws, NngpFactor& factor, double sigma2,
                      const char* tag) {
    auto& counter = counters_[tag];
    ++counter.second;
    const double lo = std::max(priors_.phi_lo, 0.0);
    const double prop = reflect_into(phi + step * rng_.normal(), lo, priors_.phi_hi);
    if (!(prop > 0.0)) return;
    NngpFactor prop_factor;
    try {
      prop_factor = ws.factor({1.0, prop}, 0.0);
    } catch (const NumericalError&) {
      return;  // unfactorizable proposal counts as rejected
    }
    const double cur_ll = corr_logpdf(field, ws, factor, sigma2);
    const double prop_ll = corr_logpdf(field, ws, prop_factor, sigma2);
    if (std::log(rng_.uniform_pos()) < prop_ll - cur_ll) {
      ++counter.first;
      ++acc;
      phi = prop;
      factor = std::move(prop_factor);
    }
  };

  if (omega_ws_)
    step_one(state_.phi_omega, step_phi_omega_, acc_phi_omega_, state_.omega, *omega_ws_,
             omega_factor_, state_.sigma2_omega, "phi_omega_mh");
  if (pa_block_)
    step_one(state_.phi_eta_pa, step_phi_eta_pa_, acc_phi_eta_pa_, state_.eta_pa, *cell_ws_,
             pa_block_->factor, state_.sigma2_eta_pa, "phi_eta_pa_mh");
  if (po_block_)
    step_one(state_.phi_eta_po, step_phi_eta_po_, acc_phi_eta_po_, state_.eta_po, *cell_ws_,
             po_block_->factor, state_.sigma2_eta_po, "phi_eta_po_mh");
}

double GibbsSampler::pattern_loglik(const EtaBlock& blk) const {
  const Eigen::VectorXd& eta = blk.which == EtaField::pa ? state_.eta_pa : state_.eta_po;
  const Eigen::VectorXd tmp = blk.o + eta;
  Eigen::VectorXd lam(n_cells_);
  kernels::ops().exp_v(tmp.data(), lam.data(), n_cells_);
  return blk.counts_d.dot(tmp) - blk.aq.dot(lam);
}

void GibbsSampler::update_intensity_beta(EtaField which) {
  auto& blk = block(which);
  Eigen::VectorXd& beta = which == EtaField::pa ? state_.beta_pa : state_.beta_po;
  const Eigen::VectorXd& eta = which == EtaField::pa ? state_.eta_pa : state_.eta_po;
  auto& counter = counters_["beta_" + blk.tag + "_mh"];

  double cur_ll = pattern_loglik(blk);
  for (int j = 0; j < beta.size(); ++j) {
    ++counter.second;
    const double cur = beta(j);
    const double prop = cur + blk.step_beta[j] * rng_.normal();
    Eigen::VectorXd o_prop = blk.o + (prop - cur) * blk.W.col(j);
    const Eigen::VectorXd tmp = o_prop + eta;
    Eigen::VectorXd lam_prop(n_cells_);
    kernels::ops().exp_v(tmp.data(), lam_prop.data(), n_cells_);
    const double prop_ll = blk.counts_d.dot(tmp) - blk.aq.dot(lam_prop);
    const double prior = -0.5 * (prop * prop - cur * cur) / priors_.beta_var;
    if (std::log(rng_.uniform_pos()) < prop_ll - cur_ll + prior) {
      ++counter.first;
      ++blk.acc_beta[j];
      beta(j) = prop;
      blk.o = std::move(o_prop);
      blk.lam = std::move(lam_prop);
      cur_ll = prop_ll;
    }
  }
}

void GibbsSampler::adapt_steps(long batch_no, long window) {
  const double w = static_cast<double>(window);
  auto adapt_block = [&](EtaBlock& blk) {
    for (int c = 0; c < n_cells_; ++c) {
      nudge_step(blk.step_eta[c], blk.acc_eta[c] / w, batch_no);
      blk.acc_eta[c] = 0;
    }
    for (std::size_t j = 0; j < blk.step_beta.size(); ++j) {
      nudge_step(blk.step_beta[j], blk.acc_beta[j] / w, batch_no);
      blk.acc_beta[j] = 0;
    }
    nudge_step(blk.step_level, blk.acc_level / w, batch_no);
    blk.acc_level = 0;
    nudge_step(blk.step_scale, blk.acc_scale / w, batch_no);
    blk.acc_scale = 0;
  };
  if (pa_block_) adapt_block(*pa_block_);
  if (po_block_) adapt_block(*po_block_);
  if (omega_ws_) {
    nudge_step(step_phi_omega_, acc_phi_omega_ / w, batch_no);
    acc_phi_omega_ = 0;
    nudge_step(step_level_omega_, acc_level_omega_ / w, batch_no);
    acc_level_omega_ = 0;
  }
  if (pa_block_) {
    nudge_step(step_phi_eta_pa_, acc_phi_eta_pa_ / w, batch_no);
    acc_phi_eta_pa_ = 0;
  }
  if (po_block_) {
    nudge_step(step_phi_eta_po_, acc_phi_eta_po_ / w, batch_no);
    acc_phi_eta_po_ = 0;
  }
  for (std::size_t j = 0; j < step_alpha_.size(); ++j) {
    nudge_step(step_alpha_[j], acc_alpha_[j] / w, batch_no);
    acc_alpha_[j] = 0;
  }
}

double GibbsSampler::joint_log_target() const {
  const int n = n_sites();
  double ll = 0.0;
  const Eigen::VectorXd mu = latent_mean();
  for (int i = 0; i < n; ++i) {
    if ((y_[i] == 1) != (state_.z(i) > 0.0)) return -std::numeric_limits<double>::infinity();
    ll += log_normal_pdf(state_.z(i), mu(i), spec_.tau2);
  }
  auto block_ll = [&](const EtaBlock& blk) {
    const Eigen::VectorXd& eta = blk.which == EtaField::pa ? state_.eta_pa : state_.eta_po;
    std::vector<double> loglam(n_cells_);
    for (int c = 0; c < n_cells_; ++c) loglam[c] = blk.o(c) + eta(c);
    return lgcp_grid_loglik_from_log_intensity(loglam, blk.counts, blk.area, blk.layers);
  };
  if (pa_block_) ll += block_ll(*pa_block_);
  if (po_block_) ll += block_ll(*po_block_);

  for (int j = 0; j < state_.alpha.size(); ++j)
    ll += log_normal_pdf(state_.alpha(j), 0.0, priors_.alpha_var);
  auto ig_logpdf = [&](double v) {
    return -(priors_.sigma2_shape + 1.0) * std::log(v) - priors_.sigma2_rate / v;
  };
  if (omega_ws_) {
    ll += corr_logpdf(state_.omega, *omega_ws_, omega_factor_, state_.sigma2_omega);
    ll += ig_logpdf(state_.sigma2_omega);
  }
  if (pa_block_) {
    for (int j = 0; j < state_.beta_pa.size(); ++j)
      ll += log_normal_pdf(state_.beta_pa(j), 0.0, priors_.beta_var);
    ll += corr_logpdf(state_.eta_pa, *cell_ws_, pa_block_->factor, state_.sigma2_eta_pa);
    ll += ig_logpdf(state_.sigma2_eta_pa);
    ll += log_normal_pdf(state_.delta_pa, 0.0, priors_.delta_var);
  }
  if (po_block_) {
    for (int j = 0; j < state_.beta_po.size(); ++j)
      ll += log_normal_pdf(state_.beta_po(j), 0.0, priors_.beta_var);
    ll += corr_logpdf(state_.eta_po, *cell_ws_, po_block_->factor, state_.sigma2_eta_po);
    ll += ig_logpdf(state_.sigma2_eta_po);
    ll += log_normal_pdf(state_.delta_po, 0.0, priors_.delta_var);
  }
  return ll;
}

double GibbsSampler::acceptance_rate(const std::string& block_name) const {
  const auto it = counters_.find(block_name);
  if (it == counters_.end() || it->second.second == 0) return 0.0;
  return static_cast<double>(it->second.first) / static_cast<double>(it->second.second);
}

void GibbsSampler::reset_acceptance_counters() { counters_.clear(); }

void GibbsSampler::sweep() {
  update_alpha_marginal();  // z is redrawn immediately below
  update_z();
  update_alpha();
  if (omega_ws_) update_omega();
  if (pa_block_) update_eta(EtaField::pa);
  if (po_block_) update_eta(EtaField::po);
  update_delta();
  update_variances();
  update_decays();
  if (omega_ws_) update_omega_level();
  if (pa_block_) {
    update_eta_level(EtaField::pa);
    update_eta_scale(EtaField::pa);
  }
  if (po_block_) {
    update_eta_level(EtaField::po);
    update_eta_scale(EtaField::po);
  }
  if (pa_block_) update_intensity_beta(EtaField::pa);
  if (po_block_) update_intensity_beta(EtaField::po);
}

// ------------------------------------------------------------------ fit

namespace {

struct Monitor {
  std::string name;
  std::function<double(const GibbsSampler::State&)> read;
};

std::vector<Monitor> build_monitors(const GibbsSampler& sampler) {
  std::vector<Monitor> mons;
  const auto& st = sampler.state();
  const ResponseKind kind = sampler.spec().kind;
  const auto& xn = sampler.x_names();
  for (int j = 0; j < st.alpha.size(); ++j) {
    const std::string nm = j == 0 ? "alpha.const" : "alpha." + xn[j - 1];
    mons.push_back({nm, [j](const GibbsSampler::State& s) { return s.alpha(j); }});
  }
  const auto& wn = sampler.w_names();
  for (int j = 0; j < st.beta_pa.size(); ++j) {
    const std::string nm = j == 0 ? "beta_pa.const" : "beta_pa." + wn[j - 1];
    mons.push_back({nm, [j](const GibbsSampler::State& s) { return s.beta_pa(j); }});
  }
  for (int j = 0; j < st.beta_po.size(); ++j) {
    const std::string nm = j == 0 ? "beta_po.const" : "beta_po." + wn[j - 1];
    mons.push_back({nm, [j](const GibbsSampler::State& s) { return s.beta_po(j); }});
  }
  if (has_eta_pa(kind))
    mons.push_back({"delta_pa", [](const GibbsSampler::State& s) { return s.delta_pa; }});
  if (has_eta_po(kind))
    mons.push_back({"delta_po", [](const GibbsSampler::State& s) { return s.delta_po; }});
  if (has_omega(kind)) {
    mons.push_back({"sigma2_omega", [](const GibbsSampler::State& s) { return s.sigma2_omega; }});
    mons.push_back({"phi_omega", [](const GibbsSampler::State& s) { return s.phi_omega; }});
  }
  if (has_eta_pa(kind)) {
    mons.push_back({"sigma2_eta_pa", [](const GibbsSampler::State& s) { return s.sigma2_eta_pa; }});
    mons.push_back({"phi_eta_pa", [](const GibbsSampler::State& s) { return s.phi_eta_pa; }});
  }
  if (has_eta_po(kind)) {
    mons.push_back({"sigma2_eta_po", [](const GibbsSampler::State& s) { return s.sigma2_eta_po; }});
    mons.push_back({"phi_eta_po", [](const GibbsSampler::State& s) { return s.phi_eta_po; }});
  }
  return mons;
}

struct ChainOutput {
  std::vector<std::vector<double>> scalars;
  std::vector<long> iters;
  std::vector<long> field_rows;  // local scalar-draw indices carrying fields
  std::vector<std::vector<double>> omega, eta_pa, eta_po;
  std::vector<std::pair<std::string, double>> acceptance;
};

}  // namespace

PosteriorArchive fit(const FitSpec& spec, const PresenceAbsenceDataset& pa,
                     const PresenceOnlyDataset* po, const CovariateRaster& raster,
                     const DegradationLayers* layers, const PriorSpec& priors,
                     const ChainConfig& chain) {
  chain.validate();
  priors.validate();

  const Rng root(chain.seed);
  std::vector<ChainOutput> outputs(chain.n_chains);
  std::vector<std::vector<std::string>> names_per_chain(chain.n_chains);

  auto run_chain = [&](int c) {
    GibbsSampler sampler(spec, pa, po, raster, layers, priors, root.fork(c));
    sampler.update_z();
    if (!std::isfinite(sampler.joint_log_target()))
      throw NumericalError("non-finite log target at initialization");

    const auto mons = build_monitors(sampler);
    for (const auto& m : mons) names_per_chain[c].push_back(m.name);

    ChainOutput out;
    out.scalars.assign(mons.size(), {});

    long batches = 0;
    for (long it = 0; it < chain.burn_in; ++it) {
      sampler.sweep();
      if ((it + 1) % chain.adapt_window == 0) sampler.adapt_steps(++batches, chain.adapt_window);
    }
    sampler.reset_acceptance_counters();

    long kept = 0;
    for (long it = 0; it < chain.keep; ++it) {
      sampler.sweep();
      if (it % chain.thin != 0) continue;
      for (std::size_t m = 0; m < mons.size(); ++m)
        out.scalars[m].push_back(mons[m].read(sampler.state()));
      out.iters.push_back(it);
      if (kept % chain.field_thin == 0) {
        out.field_rows.push_back(kept);
        const auto& st = sampler.state();
        if (sampler.has_omega_field())
          out.omega.emplace_back(st.omega.data(), st.omega.data() + st.omega.size());
        if (sampler.has_eta(GibbsSampler::EtaField::pa))
          out.eta_pa.emplace_back(st.eta_pa.data(), st.eta_pa.data() + st.eta_pa.size());
        if (sampler.has_eta(GibbsSampler::EtaField::po))
          out.eta_po.emplace_back(st.eta_po.data(), st.eta_po.data() + st.eta_po.size());
      }
      ++kept;
    }

    std::vector<std::string> blocks = {"alpha_marg_mh"};
    if (sampler.has_eta(GibbsSampler::EtaField::pa)) {
      blocks.push_back("eta_pa_mh");
      blocks.push_back("phi_eta_pa_mh");
      blocks.push_back("beta_pa_mh");
      blocks.push_back("level_pa_mh");
      blocks.push_back("scale_pa_mh");
    }
    if (sampler.has_eta(GibbsSampler::EtaField::po)) {
      blocks.push_back("eta_po_mh");
      blocks.push_back("phi_eta_po_mh");
      blocks.push_back("beta_po_mh");
      blocks.push_back("level_po_mh");
      blocks.push_back("scale_po_mh");
    }
    if (sampler.has_omega_field()) {
      blocks.push_back("phi_omega_mh");
      blocks.push_back("level_omega_mh");
    }
    for (const auto& name : blocks)
      out.acceptance.emplace_back(name, sampler.acceptance_rate(name));
    outputs[c] = std::move(out);
  };

  if (chain.n_chains == 1 || chain.threads <= 1) {
    for (int c = 0; c < chain.n_chains; ++c) run_chain(c);
  } else {
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    const int nthreads = std::min(chain.threads, chain.n_chains);
    std::vector<std::exception_ptr> errors(chain.n_chains);
    for (int t = 0; t < nthreads; ++t)
      pool.emplace_back([&] {
        for (;;) {
          const int c = next.fetch_add(1);
          if (c >= chain.n_chains) return;
          try {
            run_chain(c);
          } catch (...) {
            errors[c] = std::current_exception();
          }
        }
      });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  PosteriorArchive arch;
  arch.model_kind = response_kind_name(spec.kind);
  arch.k = spec.k;
  arch.tau2 = spec.tau2;
  arch.seed = chain.seed;
  arch.n_chains = chain.n_chains;
  arch.draws_per_chain = chain.draws_per_chain();
  arch.scalar_names = names_per_chain[0];
  arch.x_cov_names = spec.x_covariates.empty() ? raster.names : spec.x_covariates;
  arch.w_cov_names = spec.w_covariates.empty() ? raster.names : spec.w_covariates;
  for (const auto& s : pa.sites) {
    arch.site_ids.push_back(s.id);
    arch.sites.push_back(s.loc);
  }

  arch.scalar_draws.assign(arch.scalar_names.size(), {});
  long offset = 0;
  for (int c = 0; c < chain.n_chains; ++c) {
    auto& out = outputs[c];
    const long nd = static_cast<long>(out.iters.size());
    for (std::size_t m = 0; m < arch.scalar_names.size(); ++m)
      arch.scalar_draws[m].insert(arch.scalar_draws[m].end(), out.scalars[m].begin(),
                                  out.scalars[m].end());
    for (long i = 0; i < nd; ++i) {
      arch.chain_of_draw.push_back(c);
      arch.iter_of_draw.push_back(out.iters[i]);
    }
    for (long row : out.field_rows) arch.field_draw_indices.push_back(offset + row);
    for (auto& v : out.omega) arch.omega_draws.push_back(std::move(v));
    for (auto& v : out.eta_pa) arch.eta_pa_draws.push_back(std::move(v));
    for (auto& v : out.eta_po) arch.eta_po_draws.push_back(std::move(v));
    offset += nd;
  }

  for (std::size_t i = 0; i < outputs[0].acceptance.size(); ++i) {
    double mean = 0.0;
    for (int c = 0; c < chain.n_chains; ++c) mean += outputs[c].acceptance[i].second;
    arch.acceptance_rates.emplace_back(outputs[0].acceptance[i].first, mean / chain.n_chains);
  }

  // per-parameter ESS summed over chains; reported, never aborting
  arch.ess.assign(arch.scalar_names.size(), 0.0);
  arch.ess_degenerate.assign(arch.scalar_names.size(), 0);
  arch.ess_all_above_100 = true;
  for (std::size_t m = 0; m < arch.scalar_names.size(); ++m) {
    double total = 0.0;
    bool degenerate = false;
    for (int c = 0; c < chain.n_chains; ++c) {
      const auto& series = outputs[c].scalars[m];
      if (series.size() < 10) {
        total += static_cast<double>(series.size());
        continue;
      }
      const auto res = effective_sample_size(series);
      total += res.value;
      degenerate = degenerate || res.degenerate;
    }
    arch.ess[m] = total;
    arch.ess_degenerate[m] = degenerate ? 1 : 0;
    if (!(total > 100.0)) arch.ess_all_above_100 = false;
  }
  return arch;
}

// ------------------------------------------------------------- archive IO

int PosteriorArchive::scalar_index(const std::string& name) const {
  const auto it = std::find(scalar_names.begin(), scalar_names.end(), name);
  if (it == scalar_names.end())
    throw ValidationError("archive has no parameter named '" + name + "'");
  return static_cast<int>(it - scalar_names.begin());
}

ResponseKind PosteriorArchive::kind() const { return parse_response_kind(model_kind); }

namespace {

int block_rank(const std::string& n) {
  if (n.rfind("alpha.", 0) == 0) return 0;
  if (n.rfind("beta_pa.", 0) == 0) return 1;
  if (n.rfind("beta_po.", 0) == 0) return 2;
  if (n.rfind("delta", 0) == 0) return 3;
  return 4;
}

void write_scalar_block(const std::string& path, const PosteriorArchive& arch,
                        const std::vector<std::string>& params) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "param,iter,chain,value\n";
  for (const auto& p : params) {
    const int m = arch.scalar_index(p);
    for (std::size_t d = 0; d < arch.scalar_draws[m].size(); ++d)
      out << p << "," << arch.iter_of_draw[d] << "," << arch.chain_of_draw[d] << ","
          << format_double(arch.scalar_draws[m][d]) << "\n";
  }
}

void write_field_block(const std::string& path, const std::vector<long>& rows,
                       const std::vector<std::vector<double>>& draws) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "cell_or_site,iter,value\n";
  for (std::size_t d = 0; d < draws.size(); ++d)
    for (std::size_t i = 0; i < draws[d].size(); ++i)
      out << i << "," << rows[d] << "," << format_double(draws[d][i]) << "\n";
}

}  // namespace

void save_archive(const PosteriorArchive& arch, const std::string& dir) {
  ensure_directory(dir);
  Config meta;
  meta.set("model_kind", arch.model_kind);
  meta.set("k", std::to_string(arch.k));
  meta.set("tau2", format_double(arch.tau2));
  meta.set("seed", std::to_string(arch.seed));
  meta.set("n_chains", std::to_string(arch.n_chains));
  meta.set("draws_per_chain", std::to_string(arch.draws_per_chain));
  meta.set("ess_all_above_100", arch.ess_all_above_100 ? "true" : "false");
  auto join = [](const std::vector<std::string>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
    return s;
  };
  meta.set("x_covariates", join(arch.x_cov_names));
  meta.set("w_covariates", join(arch.w_cov_names));
  meta.write(join_path(dir, "archive.manifest"));

  std::vector<std::string> blocks[5];
  for (const auto& nm : arch.scalar_names) blocks[block_rank(nm)].push_back(nm);
  write_scalar_block(join_path(dir, "alpha.csv"), arch, blocks[0]);
  if (!blocks[1].empty()) write_scalar_block(join_path(dir, "beta_pa.csv"), arch, blocks[1]);
  if (!blocks[2].empty()) write_scalar_block(join_path(dir, "beta_po.csv"), arch, blocks[2]);
  if (!blocks[3].empty()) write_scalar_block(join_path(dir, "delta.csv"), arch, blocks[3]);
  if (!blocks[4].empty()) write_scalar_block(join_path(dir, "variance.csv"), arch, blocks[4]);

  if (!arch.omega_draws.empty())
    write_field_block(join_path(dir, "field_omega.csv"), arch.field_draw_indices,
                      arch.omega_draws);
  if (!arch.eta_pa_draws.empty())
    write_field_block(join_path(dir, "field_eta_pa.csv"), arch.field_draw_indices,
                      arch.eta_pa_draws);
  if (!arch.eta_po_draws.empty())
    write_field_block(join_path(dir, "field_eta_po.csv"), arch.field_draw_indices,
                      arch.eta_po_draws);

  {
    std::ofstream out(join_path(dir, "sites.csv"));
    if (!out) throw IoError("cannot write sites.csv");
    out << "id,x,y\n";
    for (std::size_t i = 0; i < arch.sites.size(); ++i)
      out << arch.site_ids[i] << "," << format_double(arch.sites[i].x) << ","
          << format_double(arch.sites[i].y) << "\n";
  }
  {
    std::ofstream out(join_path(dir, "ess.csv"));
    if (!out) throw IoError("cannot write ess.csv");
    out << "param,ess,degenerate,pass\n";
    for (std::size_t m = 0; m < arch.scalar_names.size(); ++m)
      out << arch.scalar_names[m] << "," << format_double(arch.ess[m]) << ","
          << (arch.ess_degenerate[m] ? 1 : 0) << "," << (arch.ess[m] > 100.0 ? 1 : 0) << "\n";
  }
  {
    std::ofstream out(join_path(dir, "acceptance.csv"));
    if (!out) throw IoError("cannot write acceptance.csv");
    out << "block,rate\n";
    for (const auto& [name, rate] : arch.acceptance_rates)
      out << name << "," << format_double(rate) << "\n";
  }
}

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream ss(s);
  std::string f;
  while (std::getline(ss, f, ','))
    if (!f.empty()) out.push_back(f);
  return out;
}

struct ScalarRows {
  std::vector<double> values;
  std::vector<long> iters;
  std::vector<int> chains;
};

void load_scalar_block(const std::string& path, std::map<std::string, ScalarRows>& params,
                       std::vector<std::string>& order) {
  std::ifstream in(path);
  if (!in) return;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string param, iter, chainf, value;
    std::getline(ss, param, ',');
    std::getline(ss, iter, ',');
    std::getline(ss, chainf, ',');
    std::getline(ss, value, ',');
    if (params.count(param) == 0) order.push_back(param);
    auto& rows = params[param];
    rows.values.push_back(std::stod(value));
    rows.iters.push_back(std::stol(iter));
    rows.chains.push_back(std::stoi(chainf));
  }
}

std::vector<std::vector<double>> load_field_block(const std::string& path,
                                                  std::vector<long>& rows_out) {
  std::vector<std::vector<double>> draws;
  std::ifstream in(path);
  if (!in) return draws;
  std::string line;
  std::getline(in, line);
  long cur_row = -1;
  std::vector<long> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string idxf, iterf, value;
    std::getline(ss, idxf, ',');
    std::getline(ss, iterf, ',');
    std::getline(ss, value, ',');
    const long row = std::stol(iterf);
    if (row != cur_row) {
      cur_row = row;
      rows.push_back(row);
      draws.emplace_back();
    }
    draws.back().push_back(std::stod(value));
  }
  if (!rows.empty()) rows_out = rows;
  return draws;
}

}  // namespace

PosteriorArchive load_archive(const std::string& dir) {
  const std::string manifest = join_path(dir, "archive.manifest");
  {
    std::ifstream check(manifest);
    if (!check) throw IoError("not an archive directory (missing archive.manifest): " + dir);
  }
  const Config meta = Config::from_file(manifest);

  PosteriorArchive arch;
  arch.model_kind = meta.get("model_kind");
  arch.k = static_cast<int>(meta.get_long("k", 15));
  arch.tau2 = meta.get_double("tau2", 1.0);
  arch.seed = static_cast<std::uint64_t>(meta.get_long("seed", 0));
  arch.n_chains = static_cast<int>(meta.get_long("n_chains", 1));
  arch.draws_per_chain = meta.get_long("draws_per_chain", 0);
  arch.ess_all_above_100 = meta.get_bool("ess_all_above_100", false);
  arch.x_cov_names = split_list(meta.get("x_covariates"));
  arch.w_cov_names = split_list(meta.get("w_covariates"));

  // block files are written in the archive's parameter order, so loading
  // in encounter order reproduces scalar_names exactly
  std::map<std::string, ScalarRows> params;
  std::vector<std::string> names;
  for (const char* f : {"alpha.csv", "beta_pa.csv", "beta_po.csv", "delta.csv", "variance.csv"})
    load_scalar_block(join_path(dir, f), params, names);

  arch.scalar_names = names;
  for (const auto& nm : names) arch.scalar_draws.push_back(params[nm].values);
  if (!names.empty()) {
    arch.iter_of_draw = params[names[0]].iters;
    arch.chain_of_draw = params[names[0]].chains;
  }

  arch.omega_draws = load_field_block(join_path(dir, "field_omega.csv"), arch.field_draw_indices);
  arch.eta_pa_draws =
      load_field_block(join_path(dir, "field_eta_pa.csv"), arch.field_draw_indices);
  arch.eta_po_draws =
      load_field_block(join_path(dir, "field_eta_po.csv"), arch.field_draw_indices);

  {
    std::ifstream in(join_path(dir, "sites.csv"));
    if (in) {
      std::string line;
      std::getline(in, line);
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string id, xs, ys;
        std::getline(ss, id, ',');
        std::getline(ss, xs, ',');
        std::getline(ss, ys, ',');
        arch.site_ids.push_back(id);
        arch.sites.push_back({std::stod(xs), std::stod(ys)});
      }
    }
  }
  {
    std::ifstream in(join_path(dir, "ess.csv"));
    if (in) {
      arch.ess.assign(arch.scalar_names.size(), 0.0);
      arch.ess_degenerate.assign(arch.scalar_names.size(), 0);
      std::string line;
      std::getline(in, line);
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string param, essf, degf, passf;
        std::getline(ss, param, ',');
        std::getline(ss, essf, ',');
        std::getline(ss, degf, ',');
        std::getline(ss, passf, ',');
        const auto it = std::find(arch.scalar_names.begin(), arch.scalar_names.end(), param);
        if (it != arch.scalar_names.end()) {
          const auto m = it - arch.scalar_names.begin();
          arch.ess[m] = std::stod(essf);
          arch.ess_degenerate[m] = static_cast<char>(std::stoi(degf));
        }
      }
    }
  }
  {
    std::ifstream in(join_path(dir, "acceptance.csv"));
    if (in) {
      std::string line;
      std::getline(in, line);
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string block, rate;
        std::getline(ss, block, ',');
        std::getline(ss, rate, ',');
        arch.acceptance_rates.emplace_back(block, std::stod(rate));
      }
    }
  }
  return arch;
}

}  // namespace prefsdm
