#include <atomic>
#include <cstdlib>

#include "qmetro/kernels.hpp"
#include "qmetro/simd.hpp"

namespace qmetro::simd {

namespace {

// -1: no override; otherwise static_cast<int>(Isa).
std::atomic<int> g_override{-1};

bool cpu_has_avx2() {
#if defined(QMETRO_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return "scalar";
    case Isa::avx2:
      return "avx2";
  }
  return "scalar";
}

std::optional<Isa> parse_isa(std::string_view name) {
  if (name == "scalar") return Isa::scalar;
  if (name == "avx2") return Isa::avx2;
  return std::nullopt;
}

bool isa_available(Isa isa) { return isa == Isa::scalar || cpu_has_avx2(); }

Isa detected_isa() { return cpu_has_avx2() ? Isa::avx2 : Isa::scalar; }

Isa active_isa() {
  const int forced = g_override.load(std::memory_order_relaxed);
  if (forced >= 0) {
    const auto isa = static_cast<Isa>(forced);
    return isa_available(isa) ? isa : Isa::scalar;
  }
  static const Isa from_env = [] {
    if (const char* env = std::getenv("QMETRO_ISA")) {
      if (auto isa = parse_isa(env); isa && isa_available(*isa)) return *isa;
      return Isa::scalar;
    }
    return detected_isa();
  }();
  return from_env;
}

void set_isa_override(std::optional<Isa> isa) {
  g_override.store(isa ? static_cast<int>(*isa) : -1, std::memory_order_relaxed);
}

}  // namespace qmetro::simd

namespace qmetro::kernels {

void step_lanes(const StepCoefficients& c, LaneBlock& block, const double* omega_fb,
                const double* dw, double* dy, std::size_t n) {
#if defined(QMETRO_HAVE_AVX2)
  if (n == kLanes && simd::active_isa() == simd::Isa::avx2) {
    step_lanes_avx2(c, block, omega_fb, dw, dy);
    return;
  }
#endif
  step_lanes_scalar(c, block, omega_fb, dw, dy, n);
}

void mlp_lanes(std::span<const DenseView> layers, Activation act, const double* input,
               double* scratch, double* output, std::size_t n) {
#if defined(QMETRO_HAVE_AVX2)
  if (n == kLanes && simd::active_isa() == simd::Isa::avx2) {
    mlp_lanes_avx2(layers, act, input, scratch, output);
    return;
  }
#endif
  mlp_lanes_scalar(layers, act, input, scratch, output, n);
}

}  // namespace qmetro::kernels
