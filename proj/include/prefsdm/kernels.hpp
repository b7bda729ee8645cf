#pragma once

#include <cstddef>
#include <string>

namespace prefsdm::kernels {

// Data-parallel inner loops used by the likelihood and covariance code.
// `scalar` is the reference implementation; `avx2` carries hand-vectorized
// variants selected at runtime after a cpuid check. Both lanes satisfy the
// same contracts and are equivalence-tested against each other; results may
// differ by rounding only. A given lane is deterministic, and the lane in
// use is recorded in run manifests.
struct Ops {
  // out[i] = exp(x[i])
  void (*exp_v)(const double* x, double* out, std::size_t n);
  // out[i] = sigma2 * exp(-phi * dist[i]); the exponential-covariance map
  void (*expcov_v)(const double* dist, double* out, std::size_t n, double sigma2, double phi);
  // out[i] = (x - xs[i])^2 + (y - ys[i])^2
  void (*dist2_v)(double x, double y, const double* xs, const double* ys, double* out,
                  std::size_t n);
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y[i] += a * x[i]
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  double (*sum)(const double* x, std::size_t n);
};

enum class Lane { scalar, avx2 };

const Ops& scalar_ops();

/// Currently dispatched table. Resolved once: AVX2+FMA when the CPU has
/// them, unless overridden via force_lane() or PREFSDM_KERNELS=scalar|avx2.
const Ops& ops();

Lane active_lane();
const char* lane_name(Lane lane);

/// Test/config hook; pass Lane::avx2 only on hardware that supports it.
void force_lane(Lane lane);

bool avx2_available();

}  // namespace prefsdm::kernels
