#include "prefsdm/latent.hpp"

#include <cmath>

#include "prefsdm/kernels.hpp"
#include "prefsdm/mathutil.hpp"

namespace prefsdm {

bool has_omega(ResponseKind kind) {
  return kind == ResponseKind::b || kind == ResponseKind::c || kind == ResponseKind::c_prime ||
         kind == ResponseKind::f;
}

bool has_eta_pa(ResponseKind kind) {
  return kind == ResponseKind::c || kind == ResponseKind::d || kind == ResponseKind::e ||
         kind == ResponseKind::f;
}

bool has_eta_po(ResponseKind kind) {
  return kind == ResponseKind::c_prime || kind == ResponseKind::d_prime ||
         kind == ResponseKind::e || kind == ResponseKind::f;
}

bool needs_po_data(ResponseKind kind) { return has_eta_po(kind); }

const char* response_kind_name(ResponseKind kind) {
  switch (kind) {
    case ResponseKind::a: return "a";
    case ResponseKind::b: return "b";
    case ResponseKind::c: return "c";
    case ResponseKind::d: return "d";
    case ResponseKind::c_prime: return "c'";
    case ResponseKind::d_prime: return "d'";
    case ResponseKind::e: return "e";
    case ResponseKind::f: return "f";
  }
  return "?";
}

ResponseKind parse_response_kind(const std::string& name) {
  if (name == "a") return ResponseKind::a;
  if (name == "b") return ResponseKind::b;
  if (name == "c") return ResponseKind::c;
  if (name == "d") return ResponseKind::d;
  if (name == "c'" || name == "cp" || name == "cprime") return ResponseKind::c_prime;
  if (name == "d'" || name == "dp" || name == "dprime") return ResponseKind::d_prime;
  if (name == "e") return ResponseKind::e;
  if (name == "f") return ResponseKind::f;
  throw ValidationError("unknown response model kind '" + name +
                        "' (expected one of a,b,c,d,c',d',e,f)");
}

void ResponseModelSpec::validate() const {
  if (alpha.empty()) throw ValidationError("alpha must hold at least the intercept");
  if (!(tau2 > 0.0)) throw ValidationError("tau2 must be strictly positive");
  const std::string name = response_kind_name(kind);
  if (has_eta_pa(kind) != delta_pa.has_value())
    throw ValidationError("model (" + name + "): delta_pa " +
                          (has_eta_pa(kind) ? "required" : "not allowed"));
  if (has_eta_po(kind) != delta_po.has_value())
    throw ValidationError("model (" + name + "): delta_po " +
                          (has_eta_po(kind) ? "required" : "not allowed"));
  if (has_omega(kind) != omega_params.has_value())
    throw ValidationError("model (" + name + "): omega parameters " +
                          (has_omega(kind) ? "required" : "not allowed"));
  if (omega_params) omega_params->validate();
}

double linear_predictor(const ResponseModelSpec& spec, std::span<const double> x,
                        const LatentFields& fields) {
  spec.validate();
  if (x.size() != spec.alpha.size())
    throw ValidationError("site covariate vector length does not match alpha");
  double mean = kernels::ops().dot(x.data(), spec.alpha.data(), x.size());
  if (has_eta_pa(spec.kind)) {
    if (!fields.eta_pa) throw ValidationError("linear_predictor: eta_pa value required");
    mean += *spec.delta_pa * *fields.eta_pa;
  }
  if (has_eta_po(spec.kind)) {
    if (!fields.eta_po) throw ValidationError("linear_predictor: eta_po value required");
    mean += *spec.delta_po * *fields.eta_po;
  }
  if (has_omega(spec.kind)) {
    if (!fields.omega) throw ValidationError("linear_predictor: omega value required");
    mean += *fields.omega;
  }
  return mean;
}

double presence_probability(double mean_z, double tau2) {
  if (!(tau2 > 0.0)) throw ValidationError("tau2 must be strictly positive");
  return normal_cdf(mean_z / std::sqrt(tau2));
}

double draw_truncated_z(double mean_z, double tau2, int y, Rng& rng) {
  if (!(tau2 > 0.0)) throw ValidationError("tau2 must be strictly positive");
  if (y != 0 && y != 1) throw ValidationError("response must be 0 or 1");
  const double sd = std::sqrt(tau2);
  return y == 1 ? rng.truncated_normal_lower(mean_z, sd, 0.0)
                : rng.truncated_normal_upper(mean_z, sd, 0.0);
}

}  // namespace prefsdm
