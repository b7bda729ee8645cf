#include <cmath>
#include <cstddef>

#include "prefsdm/kernels.hpp"

namespace prefsdm::kernels {

namespace {

void exp_v_scalar(const double* x, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(x[i]);
}

void expcov_v_scalar(const double* dist, double* out, std::size_t n, double sigma2, double phi) {
  for (std::size_t i = 0; i < n; ++i) out[i] = sigma2 * std::exp(-phi * dist[i]);
}

void dist2_v_scalar(double x, double y, const double* xs, const double* ys, double* out,
                    std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x - xs[i];
    const double dy = y - ys[i];
    out[i] = dx * dx + dy * dy;
  }
}

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_scalar(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

double sum_scalar(const double* x, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i];
  return s;
}

}  // namespace

const Ops& scalar_ops() {
  static const Ops table{exp_v_scalar, expcov_v_scalar, dist2_v_scalar,
                         dot_scalar,   axpy_scalar,     sum_scalar};
  return table;
}

}  // namespace prefsdm::kernels
