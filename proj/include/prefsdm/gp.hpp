#pragma once

#include <span>
#include <vector>

#include "prefsdm/geo.hpp"
#include "prefsdm/rng.hpp"

namespace prefsdm {

/// Exponential covariance C(s,s') = sigma2 * exp(-phi * ||s - s'||).
struct ExpCovParams {
  double sigma2 = 1.0;
  double phi = 1.0;

  void validate() const;
};

double exp_cov(const Location& a, const Location& b, const ExpCovParams& params);

/// A latent Gaussian field sampled at sites or cell centroids.
struct GpField {
  std::vector<Location> sites;
  std::vector<double> values;
};

enum class OrderingRule { lexicographic, max_min };

/// Sequential conditioning structure: sites are permuted by the ordering
/// rule and each position conditions on (up to) its k nearest predecessors.
/// Neighbor slots hold positions in the ordering, not original indices.
struct NngpIndex {
  int k = 0;
  OrderingRule rule = OrderingRule::lexicographic;
  std::vector<int> order;   // position -> original site index
  std::vector<int> rank;    // original site index -> position
  std::vector<int> nbr;     // flattened [pos * k + t], t < n_nbr[pos]
  std::vector<int> n_nbr;   // min(pos, k)

  int n() const { return static_cast<int>(order.size()); }

  /// Neighbor set of ordering position `pos`, reported as original site
  /// indices (always a subset of order[0..pos)).
  std::vector<int> neighbor_sites(int pos) const;
};

/// Deterministic given (sites, k, rule). Sites must be distinct; the
/// default ordering is a lexicographic (x, y) sort, with max-min ordering
/// available.
NngpIndex build_nngp_index(std::span<const Location> sites, int k,
                           OrderingRule rule = OrderingRule::lexicographic);

/// Sequential factorization at fixed covariance parameters: values at
/// position j are conditionally N(coef_j . v[nbr], cond_var_j). cond_var
/// includes sigma2 and the nugget.
struct NngpFactor {
  std::vector<double> coef;      // [pos * k + t]
  std::vector<double> cond_var;  // per position
  double log_det() const;        // sum of log cond_var
};

/// Geometry cache for repeated factor rebuilds at new parameter values
/// (the decay updates in the sampler hit this path on every proposal).
/// Site-to-neighbor and neighbor-pairwise distances are computed once;
/// factor() then only evaluates the covariance map and k x k solves.
class NngpWorkspace {
public:
  NngpWorkspace(std::span<const Location> sites, NngpIndex index);

  const NngpIndex& index() const { return index_; }
  int n() const { return index_.n(); }

  NngpFactor factor(const ExpCovParams& params, double nugget = 0.0) const;

  /// Positions whose neighbor set contains `pos`, with the slot it sits
  /// in. Needed by the sequential conjugate field updates.
  const std::vector<std::pair<int, int>>& dependents(int pos) const { return deps_[pos]; }

private:
  NngpIndex index_;
  std::vector<double> d_nb_;  // [pos * k + t]
  std::vector<double> d_nn_;  // [pos * k * k + a * k + b]
  std::vector<std::vector<std::pair<int, int>>> deps_;
};

/// Log density of `values` under the sequential factorization. `mean` may
/// be empty (zero mean) or per-site. Values/mean are in original site
/// order; the index supplies the permutation.
double nngp_logpdf(std::span<const double> values, std::span<const double> mean,
                   const NngpIndex& index, const NngpFactor& factor);

/// Convenience form that builds the factor internally.
double nngp_logpdf(const GpField& field, const NngpIndex& index, const ExpCovParams& params,
                   std::span<const double> mean = {}, double nugget = 0.0);

/// Draw a field from the sequential prior (position order), returned in
/// original site order.
std::vector<double> nngp_prior_draw(const NngpIndex& index, const NngpFactor& factor, Rng& rng);

/// Exact dense multivariate normal log density with covariance
/// C + nugget * I; the reference the sequential approximation is tested
/// against. Cholesky failures escalate through the jitter ladder before
/// raising NumericalError.
double full_gp_logpdf(const GpField& field, const ExpCovParams& params,
                      std::span<const double> mean = {}, double nugget = 0.0);

/// Exact dense GP draw (simulation-side truth fields).
std::vector<double> dense_gp_draw(std::span<const Location> sites, const ExpCovParams& params,
                                  double nugget, Rng& rng);

/// Precomputed kriging geometry: each new site conditions on its k nearest
/// conditioning sites. Reused across posterior draws where only the
/// parameter values and conditioning values change.
class KrigingPlan {
public:
  KrigingPlan(std::span<const Location> cond_sites, std::span<const Location> new_sites, int k);

  int n_new() const { return static_cast<int>(n_nbr_.size()); }

  /// Predictive mean/variance at every new site.
  void moments(const ExpCovParams& params, double nugget, std::span<const double> cond_values,
               double process_mean, std::span<double> out_mean, std::span<double> out_var) const;

private:
  int k_;
  std::vector<int> nbr_;      // [i * k + t] conditioning-site indices
  std::vector<int> n_nbr_;
  std::vector<double> d_nb_;  // [i * k + t]
  std::vector<double> d_nn_;  // [i * k * k + a * k + b]
};

/// Draw from the nearest-neighbor predictive conditional at the new sites
/// (independent given the conditioning set); deterministic given the rng
/// state. Convenience wrapper over KrigingPlan.
std::vector<double> nngp_conditional_draw(std::span<const Location> cond_sites,
                                          std::span<const double> cond_values,
                                          const ExpCovParams& params, double nugget,
                                          std::span<const Location> new_sites, int k,
                                          double process_mean, Rng& rng);

}  // namespace prefsdm
