#pragma once

// Conditional dynamics of one monitored trajectory: first moments,
// covariance, their derivatives with respect to omega, the accumulated
// homodyne Fisher information and the measurement record.

#include <cstdint>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>

#include "qmetro/gaussian.hpp"
#include "qmetro/kernels.hpp"
#include "qmetro/rng.hpp"

namespace qmetro {

/// d r / d omega and d sigma / d omega.
struct TangentState {
  Vec2 dr;
  Sym2 dsigma{0.0, 0.0, 0.0};
};

struct InitialCondition {
  Vec2 r0;
  double n_th = 0.0;

  /// Thermal covariance (2 n_th + 1) I.
  Sym2 covariance() const { return Sym2::diag(2.0 * n_th + 1.0, 2.0 * n_th + 1.0); }
};

struct TrajectoryState {
  GaussianState state;
  TangentState tangent;
  double t = 0.0;
  std::int64_t step_index = 0;
  /// 2 * sum dt (d r)^T B B^T (d r) over the steps taken so far.
  double fhom_integral = 0.0;
  RngStream rng;
  double last_dy = 0.0;

  friend bool operator==(const TrajectoryState& a, const TrajectoryState& b);
};

struct StepResult {
  double dy = 0.0;
  double dw = 0.0;
  double fhom_increment = 0.0;
};

class UnphysicalStateError : public std::runtime_error {
 public:
  UnphysicalStateError(std::int64_t step, const std::string& what)
      : std::runtime_error("unphysical state at step " + std::to_string(step) + ": " + what),
        step_(step) {}
  std::int64_t step() const { return step_; }

 private:
  std::int64_t step_;
};

/// Smallest det(sigma) accepted after an Euler step: 1 - max(1e-9, kappa dt).
double step_det_floor(const SystemParams& params);

/// Empty string if the moments after a step are acceptable, else a reason.
std::string check_step_state(const GaussianState& s, const TangentState& tg,
                             const SystemParams& params);

/// Fresh trajectory: thermal covariance, zero tangent, noise keyed by `key`.
TrajectoryState reset(const SystemParams& params, const InitialCondition& init, StreamKey key);
inline TrajectoryState reset(const SystemParams& params, const InitialCondition& init,
                             std::uint64_t seed) {
  return reset(params, init, StreamKey{seed, 0, StreamPurpose::measurement_noise});
}

/// Draws dw ~ N(0, dt) from the trajectory stream and advances one step.
StepResult step(TrajectoryState& traj, const SystemParams& params, double omega_fb);

/// Advances with a caller-supplied Wiener increment.
StepResult step_with_noise(TrajectoryState& traj, const SystemParams& params, double omega_fb,
                           double dw);

/// Advances by conditioning on a recorded measurement increment dy, i.e. with
/// dw = dy + sqrt(2) (B^T r)_1 dt for the current r. Used to evaluate the same
/// record under different omega.
StepResult step_with_record(TrajectoryState& traj, const SystemParams& params,
                            double omega_fb, double dy);

/// Packs/unpacks one lane of a kernel block.
void load_lane(kernels::LaneBlock& block, std::size_t lane, const TrajectoryState& traj);
void store_lane(const kernels::LaneBlock& block, std::size_t lane, TrajectoryState& traj);

/// One row of a recorded time series.
struct Snapshot {
  double t = 0.0;
  std::int64_t step = 0;
  GaussianState state;
  TangentState tangent;
  double omega_fb = 0.0;
  double dy = 0.0;
  double fhom_integral = 0.0;
};

Snapshot snapshot_of(const TrajectoryState& traj, double omega_fb);

/// CSV trace: t, r_q, r_p, s_qq, s_qp, s_pp, dr_q, dr_p, ds_qq, ds_qp, ds_pp,
/// omega_fb, dy, fhom_integral with %.12e formatting.
void write_trace_csv(std::ostream& os, std::span<const Snapshot> series);

}  // namespace qmetro
