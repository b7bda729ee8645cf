#include <atomic>
#include <cstdlib>
#include <cstring>

#include "prefsdm/errors.hpp"
#include "prefsdm/kernels.hpp"

namespace prefsdm::kernels {

#ifdef PREFSDM_HAVE_AVX2_TU
const Ops& avx2_ops();  // defined in kernels_avx2.cpp
#endif

bool avx2_available() {
#ifdef PREFSDM_HAVE_AVX2_TU
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

namespace {

std::atomic<Lane> g_lane{Lane::scalar};
std::atomic<bool> g_resolved{false};

Lane resolve_lane() {
  if (const char* env = std::getenv("PREFSDM_KERNELS")) {
    if (std::strcmp(env, "scalar") == 0) return Lane::scalar;
    if (std::strcmp(env, "avx2") == 0) {
      if (!avx2_available())
        throw ValidationError("PREFSDM_KERNELS=avx2 requested but AVX2/FMA not available");
      return Lane::avx2;
    }
    if (std::strcmp(env, "auto") != 0)
      throw ValidationError(std::string("unknown PREFSDM_KERNELS value: ") + env);
  }
  return avx2_available() ? Lane::avx2 : Lane::scalar;
}

Lane current() {
  if (!g_resolved.load(std::memory_order_acquire)) {
    g_lane.store(resolve_lane(), std::memory_order_release);
    g_resolved.store(true, std::memory_order_release);
  }
  return g_lane.load(std::memory_order_acquire);
}

}  // namespace

const Ops& ops() {
#ifdef PREFSDM_HAVE_AVX2_TU
  if (current() == Lane::avx2) return avx2_ops();
#endif
  current();
  return scalar_ops();
}

Lane active_lane() { return current(); }

const char* lane_name(Lane lane) { return lane == Lane::avx2 ? "avx2" : "scalar"; }

void force_lane(Lane lane) {
  if (lane == Lane::avx2 && !avx2_available())
    throw ValidationError("cannot force avx2 kernels: AVX2/FMA not available");
  g_lane.store(lane, std::memory_order_release);
  g_resolved.store(true, std::memory_order_release);
}

}  // namespace prefsdm::kernels
