#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "prefsdm/geo.hpp"
#include "prefsdm/gp.hpp"
#include "prefsdm/rng.hpp"

namespace prefsdm {

/// The response-model lattice. Components of the latent mean per kind:
///   a:  x'alpha
///   b:  x'alpha + omega
///   c:  x'alpha + delta_pa * eta_pa + omega
///   d:  x'alpha + delta_pa * eta_pa
///   c': x'alpha + delta_po * eta_po + omega
///   d': x'alpha + delta_po * eta_po
///   e:  x'alpha + delta_pa * eta_pa + delta_po * eta_po
///   f:  x'alpha + delta_pa * eta_pa + delta_po * eta_po + omega
enum class ResponseKind { a, b, c, d, c_prime, d_prime, e, f };

bool has_omega(ResponseKind kind);
bool has_eta_pa(ResponseKind kind);
bool has_eta_po(ResponseKind kind);
bool needs_po_data(ResponseKind kind);  // same as has_eta_po

const char* response_kind_name(ResponseKind kind);
ResponseKind parse_response_kind(const std::string& name);

/// Declarative description of one lattice node. Component values are
/// present exactly when the kind uses them.
struct ResponseModelSpec {
  ResponseKind kind = ResponseKind::a;
  std::vector<double> alpha;  // intercept + covariate coefficients
  std::optional<double> delta_pa;
  std::optional<double> delta_po;
  std::optional<ExpCovParams> omega_params;
  double tau2 = 1.0;  // fixed residual variance (identifiability)

  void validate() const;
};

/// Per-site latent-field lookups for linear_predictor. eta fields live on
/// grid cells and are read at the site's containing cell.
struct LatentFields {
  std::optional<double> omega;
  std::optional<double> eta_pa;
  std::optional<double> eta_po;
};

/// Mean of Z at a site: x'alpha plus the kind's latent components.
/// Missing required components raise ValidationError.
double linear_predictor(const ResponseModelSpec& spec, std::span<const double> x,
                        const LatentFields& fields);

/// P(Z > 0) = Phi(mean_z / sqrt(tau2)).
double presence_probability(double mean_z, double tau2);

/// Truncated-normal augmentation draw: N(mean_z, tau2) restricted to
/// (0, inf) when y = 1 and to (-inf, 0] when y = 0. Stable for
/// |mean_z| / sqrt(tau2) well beyond 8.
double draw_truncated_z(double mean_z, double tau2, int y, Rng& rng);

}  // namespace prefsdm
