#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "prefsdm/geo.hpp"
#include "prefsdm/gp.hpp"
#include "prefsdm/latent.hpp"
#include "prefsdm/pointprocess.hpp"
#include "prefsdm/rng.hpp"

namespace prefsdm {

/// Weak priors: N(0, var I) on regression coefficients and deltas,
/// inverse-gamma on the process variances, uniform on the decays. delta_po
/// gets a nonnegative truncated normal when flagged.
struct PriorSpec {
  double alpha_var = 100.0;
  double beta_var = 100.0;
  double delta_var = 100.0;
  bool delta_po_truncated = true;
  double sigma2_shape = 2.0;
  double sigma2_rate = 0.1;
  double phi_lo = 0.0;
  double phi_hi = 200.0;

  void validate() const;
};

struct ChainConfig {
  long burn_in = 20000;
  long keep = 20000;
  int thin = 1;
  int field_thin = 10;  // field draws stored every thin*field_thin kept iters
  std::uint64_t seed = 1;
  int n_chains = 1;
  int threads = 1;
  long adapt_window = 50;  // step-size adaptation batch length (burn-in only)

  void validate() const;
  long draws_per_chain() const { return keep / thin; }
};

/// Which node of the model lattice to fit and how.
struct FitSpec {
  ResponseKind kind = ResponseKind::a;
  IntensityKind intensity_pa = IntensityKind::lgcp_ii;
  IntensityKind intensity_po = IntensityKind::lgcp_ii;
  double tau2 = 1.0;
  int k = 15;
  OrderingRule ordering = OrderingRule::lexicographic;
  // raster covariates entering x(s) / w(s); empty selects all
  std::vector<std::string> x_covariates;
  std::vector<std::string> w_covariates;
};

struct EssResult {
  double value = 0.0;
  bool degenerate = false;  // constant series
};

/// N / (1 + 2 sum rho_t) with the autocorrelation sum truncated at the
/// first non-positive consecutive pair. Requires >= 10 draws; a constant
/// series yields 1 with the degenerate flag set.
EssResult effective_sample_size(std::span<const double> draws);

/// Stored MCMC output plus everything prediction needs (training sites,
/// parameter names, thinned field draws aligned with their scalar draws).
struct PosteriorArchive {
  std::string model_kind;
  int k = 15;
  double tau2 = 1.0;
  std::uint64_t seed = 0;
  int n_chains = 1;
  long draws_per_chain = 0;
  std::vector<std::string> x_cov_names;  // without the intercept
  std::vector<std::string> w_cov_names;

  std::vector<std::string> scalar_names;
  std::vector<std::vector<double>> scalar_draws;  // [param][draw], chains concatenated
  std::vector<int> chain_of_draw;
  std::vector<long> iter_of_draw;  // kept-iteration index within the chain

  std::vector<long> field_draw_indices;           // rows of scalar_draws the fields align to
  std::vector<std::vector<double>> omega_draws;   // [field draw][site]
  std::vector<std::vector<double>> eta_pa_draws;  // [field draw][cell]
  std::vector<std::vector<double>> eta_po_draws;

  std::vector<std::string> site_ids;
  std::vector<Location> sites;

  std::vector<double> ess;  // aligned with scalar_names
  std::vector<char> ess_degenerate;
  bool ess_all_above_100 = false;
  std::vector<std::pair<std::string, double>> acceptance_rates;

  std::size_t n_draws() const { return scalar_draws.empty() ? 0 : scalar_draws[0].size(); }
  int scalar_index(const std::string& name) const;
  ResponseKind kind() const;
};

void save_archive(const PosteriorArchive& archive, const std::string& dir);
PosteriorArchive load_archive(const std::string& dir);

/// One chain of the Gibbs/Metropolis sweep over a lattice node. The update
/// blocks are public so each conditional can be exercised and checked on
/// its own; fit() drives full sweeps.
///
/// Sweep order: z, alpha, omega, eta_pa, eta_po, then the
/// (delta, sigma2, phi, beta) blocks.
class GibbsSampler {
public:
  struct State {
    Eigen::VectorXd z;
    Eigen::VectorXd alpha;
    Eigen::VectorXd omega;    // empty when the kind has no omega
    Eigen::VectorXd eta_pa;   // per cell; empty when unused
    Eigen::VectorXd eta_po;
    Eigen::VectorXd beta_pa;  // intercept + w covariates; empty when unused
    Eigen::VectorXd beta_po;
    double delta_pa = 0.0;
    double delta_po = 0.0;
    double sigma2_omega = 1.0, phi_omega = 100.0;
    double sigma2_eta_pa = 1.0, phi_eta_pa = 100.0;
    double sigma2_eta_po = 1.0, phi_eta_po = 100.0;
  };

  GibbsSampler(const FitSpec& spec, const PresenceAbsenceDataset& pa,
               const PresenceOnlyDataset* po, const CovariateRaster& raster,
               const DegradationLayers* layers, const PriorSpec& priors, Rng rng);
  ~GibbsSampler();

  void sweep();

  void update_z();
  void update_alpha();
  /// Exact conditional (mean, covariance) of alpha given the current
  /// state; update_alpha draws from it.
  std::pair<Eigen::VectorXd, Eigen::MatrixXd> alpha_conditional() const;
  void update_omega();
  enum class EtaField { pa, po };
  void update_eta(EtaField which);
  void update_delta();
  void update_variances();
  void update_decays();
  void update_intensity_beta(EtaField which);

  // Mixing moves. The augmented sampler alone random-walks across three
  // weakly identified directions: the intercept against z (probit data
  // augmentation), the intercept against the field level, and delta
  // against the field amplitude. Each move below targets one of them and
  // leaves the probit likelihood factor exactly invariant (or integrates
  // z out), so the sweep stays a valid kernel for the same posterior.
  /// Component-wise MH on alpha against the z-marginal Bernoulli
  /// likelihood; must run right before update_z redraws z.
  void update_alpha_marginal();
  /// Shift m between the intercept and the omega field level.
  void update_omega_level();
  /// Shift m between the intensity intercept and the eta field level,
  /// compensating alpha so delta * eta contributions are unchanged.
  void update_eta_level(EtaField which);
  /// Rescale (eta, sigma2_eta) by c and delta by 1/c jointly.
  void update_eta_scale(EtaField which);

  /// Nudge every Metropolis step size toward 0.44 acceptance using the
  /// accepts recorded since the previous call; burn-in only.
  void adapt_steps(long batch_no, long window);

  /// Joint log target at the current state (probit + pattern likelihoods
  /// + priors); used for the initialization finiteness gate.
  double joint_log_target() const;

  State& state() { return state_; }
  const State& state() const { return state_; }

  /// Recompute every internal cache after the state was mutated directly.
  void refresh_caches();

  /// Replace the binary responses (Geweke-style successive-conditional
  /// simulation redraws the data each round).
  void set_responses(std::span<const int> y);

  bool has_omega_field() const { return omega_ws_ != nullptr; }
  bool has_eta(EtaField which) const;
  int n_sites() const { return static_cast<int>(site_cells_.size()); }
  int n_cells() const { return n_cells_; }
  const Eigen::MatrixXd& design_x() const { return X_; }
  std::span<const int> site_cells() const { return site_cells_; }
  std::span<const int> responses() const { return y_; }

  /// Per-site latent mean at the current state.
  Eigen::VectorXd latent_mean() const;

  double acceptance_rate(const std::string& block) const;
  void reset_acceptance_counters();

  const FitSpec& spec() const { return spec_; }
  const std::vector<std::string>& x_names() const { return x_names_; }
  const std::vector<std::string>& w_names() const { return w_names_; }

private:
  struct EtaBlock;  // per-field pattern state (counts, factor, caches)

  void rebuild_factor(EtaField which);
  void rebuild_omega_factor();
  double corr_logpdf(const Eigen::VectorXd& values, const NngpWorkspace& ws,
                     const NngpFactor& factor, double sigma2) const;
  double pattern_loglik(const EtaBlock& blk) const;
  EtaBlock& block(EtaField which);
  const EtaBlock& block(EtaField which) const;

  FitSpec spec_;
  PriorSpec priors_;
  Rng rng_;

  // data
  std::vector<int> y_;
  std::vector<int> site_cells_;
  Eigen::MatrixXd X_;    // n x p_x (leading intercept column)
  Eigen::MatrixXd XtX_;
  int n_cells_ = 0;
  std::vector<std::string> x_names_, w_names_;

  std::unique_ptr<NngpWorkspace> omega_ws_;
  NngpFactor omega_factor_;  // correlation scale (sigma2 = 1)
  std::unique_ptr<NngpWorkspace> cell_ws_;  // shared by both eta fields

  std::unique_ptr<EtaBlock> pa_block_;
  std::unique_ptr<EtaBlock> po_block_;

  State state_;

  // caches
  Eigen::VectorXd xa_;    // X alpha
  Eigen::VectorXd h_pa_;  // eta_pa at site cells
  Eigen::VectorXd h_po_;

  // adaptation (step sizes; accepted counts since the last adapt batch)
  double step_phi_omega_ = 10.0;
  double step_phi_eta_pa_ = 10.0;
  double step_phi_eta_po_ = 10.0;
  long acc_phi_omega_ = 0, acc_phi_eta_pa_ = 0, acc_phi_eta_po_ = 0;
  std::vector<double> step_alpha_;
  std::vector<long> acc_alpha_;
  double step_level_omega_ = 1.0;
  long acc_level_omega_ = 0;

  std::map<std::string, std::pair<long, long>> counters_;  // block -> (acc, prop)
};

/// Fit one lattice node. The PO dataset is required exactly for kinds
/// c', d', e, f; intensity model (ii) is required for every pattern whose
/// eta enters the response. Deterministic given (data, config, seed).
PosteriorArchive fit(const FitSpec& spec, const PresenceAbsenceDataset& pa,
                     const PresenceOnlyDataset* po, const CovariateRaster& raster,
                     const DegradationLayers* layers, const PriorSpec& priors,
                     const ChainConfig& chain);

}  // namespace prefsdm
