#pragma once

// Lane kernels: kLanes trajectories stored structure-of-arrays and advanced
// together. Each kernel has a scalar reference and an AVX2 variant.

#include <cstddef>
#include <span>

#include "qmetro/gaussian.hpp"
#include "qmetro/simd.hpp"

namespace qmetro::kernels {

inline constexpr std::size_t kLanes = 4;

/// Moments, parameter derivatives and accumulated homodyne information for
/// kLanes trajectories.
struct alignas(32) LaneBlock {
  double r_q[kLanes];
  double r_p[kLanes];
  double s_qq[kLanes];
  double s_qp[kLanes];
  double s_pp[kLanes];
  double dr_q[kLanes];
  double dr_p[kLanes];
  double ds_qq[kLanes];
  double ds_qp[kLanes];
  double ds_pp[kLanes];
  double fhom[kLanes];
};

/// Per-step constants shared by every lane.
struct StepCoefficients {
  double omega;
  double a11;         // -(chi + kappa/2)
  double a22;         // chi - kappa/2
  double b;           // -sqrt(eta kappa), the nonzero entry of B = E
  double neg_b;       // sqrt(eta kappa)
  double kappa;
  double dt;
  double inv_sqrt2;
  double dy_gain;     // -sqrt(2) b dt
  double fhom_gain;   // 2 dt eta kappa

  static StepCoefficients from(const SystemParams& params);
};

/// One Euler-Maruyama step of moments and tangents for n lanes
/// (n <= kLanes). dy receives the predictor-form measurement increments.
void step_lanes_scalar(const StepCoefficients& c, LaneBlock& block, const double* omega_fb,
                       const double* dw, double* dy, std::size_t n);
/// Same contract for exactly kLanes lanes; requires AVX2.
void step_lanes_avx2(const StepCoefficients& c, LaneBlock& block, const double* omega_fb,
                     const double* dw, double* dy);

/// Dispatches on simd::active_isa(); partial blocks use the scalar kernel.
void step_lanes(const StepCoefficients& c, LaneBlock& block, const double* omega_fb,
                const double* dw, double* dy, std::size_t n);

/// Read-only view of one dense layer: weights row-major [out][in].
struct DenseView {
  std::size_t in = 0;
  std::size_t out = 0;
  const double* weights = nullptr;
  const double* bias = nullptr;
};

/// Activation applied after every layer except the last.
enum class Activation { tanh, relu, identity };

/// Feed-forward pass for n lanes. Input and scratch are lane-interleaved:
/// element i of lane l lives at [i * kLanes + l]. scratch needs
/// 2 * max_width * kLanes doubles. Output gets one value per lane.
void mlp_lanes_scalar(std::span<const DenseView> layers, Activation act, const double* input,
                      double* scratch, double* output, std::size_t n);
void mlp_lanes_avx2(std::span<const DenseView> layers, Activation act, const double* input,
                    double* scratch, double* output);
void mlp_lanes(std::span<const DenseView> layers, Activation act, const double* input,
               double* scratch, double* output, std::size_t n);

}  // namespace qmetro::kernels
