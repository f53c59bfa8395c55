#include "qmetro/trajectory.hpp"

#include <algorithm>
#include <cmath>

#include "qmetro/csv.hpp"

namespace qmetro {

bool operator==(const TrajectoryState& a, const TrajectoryState& b) {
  return a.state.r == b.state.r && a.state.sigma == b.state.sigma &&
         a.tangent.dr == b.tangent.dr && a.tangent.dsigma == b.tangent.dsigma && a.t == b.t &&
         a.step_index == b.step_index && a.fhom_integral == b.fhom_integral &&
         a.rng == b.rng && a.last_dy == b.last_dy;
}

double step_det_floor(const SystemParams& params) {
  return 1.0 - std::max(kPhysicalDetTolerance, params.kappa * params.dt);
}

std::string check_step_state(const GaussianState& s, const TangentState& tg,
                             const SystemParams& params) {
  const double vals[] = {s.r.q,       s.r.p,       s.sigma.qq,       s.sigma.qp,
                         s.sigma.pp,  tg.dr.q,     tg.dr.p,          tg.dsigma.qq,
                         tg.dsigma.qp, tg.dsigma.pp};
  for (double v : vals) {
    if (!std::isfinite(v)) return "non-finite moments";
  }
  if (!(s.sigma.qq > 0.0 && s.sigma.pp > 0.0)) return "covariance lost positivity";
  const double det = s.sigma.det();
  if (!(det >= step_det_floor(params))) {
    return "det(sigma) = " + std::to_string(det) + " below the uncertainty bound";
  }
  return {};
}

TrajectoryState reset(const SystemParams& params, const InitialCondition& init, StreamKey key) {
  params.validate();
  if (!(init.n_th >= 0.0) || !std::isfinite(init.n_th)) {
    throw ParameterError("initial thermal occupation must be finite and >= 0");
  }
  if (!std::isfinite(init.r0.q) || !std::isfinite(init.r0.p)) {
    throw ParameterError("initial first moments must be finite");
  }
  TrajectoryState traj;
  traj.state = {init.r0, init.covariance()};
  traj.rng = RngStream(key);
  return traj;
}

void load_lane(kernels::LaneBlock& k, std::size_t l, const TrajectoryState& traj) {
  k.r_q[l] = traj.state.r.q;
  k.r_p[l] = traj.state.r.p;
  k.s_qq[l] = traj.state.sigma.qq;
  k.s_qp[l] = traj.state.sigma.qp;
  k.s_pp[l] = traj.state.sigma.pp;
  k.dr_q[l] = traj.tangent.dr.q;
  k.dr_p[l] = traj.tangent.dr.p;
  k.ds_qq[l] = traj.tangent.dsigma.qq;
  k.ds_qp[l] = traj.tangent.dsigma.qp;
  k.ds_pp[l] = traj.tangent.dsigma.pp;
  k.fhom[l] = traj.fhom_integral;
}

void store_lane(const kernels::LaneBlock& k, std::size_t l, TrajectoryState& traj) {
  traj.state.r = {k.r_q[l], k.r_p[l]};
  traj.state.sigma = {k.s_qq[l], k.s_qp[l], k.s_pp[l]};
  traj.tangent.dr = {k.dr_q[l], k.dr_p[l]};
  traj.tangent.dsigma = {k.ds_qq[l], k.ds_qp[l], k.ds_pp[l]};
  traj.fhom_integral = k.fhom[l];
}

StepResult step_with_noise(TrajectoryState& traj, const SystemParams& params, double omega_fb,
                           double dw) {
  const auto coeffs = kernels::StepCoefficients::from(params);
  kernels::LaneBlock block;
  load_lane(block, 0, traj);
  const double before = traj.fhom_integral;
  double dy = 0.0;
  kernels::step_lanes_scalar(coeffs, block, &omega_fb, &dw, &dy, 1);
  TrajectoryState next = traj;
  store_lane(block, 0, next);
  next.step_index = traj.step_index + 1;
  next.t = static_cast<double>(next.step_index) * params.dt;
  next.last_dy = dy;
  if (auto why = check_step_state(next.state, next.tangent, params); !why.empty()) {
    throw UnphysicalStateError(next.step_index, why);
  }
  traj = std::move(next);
  return {dy, dw, traj.fhom_integral - before};
}

StepResult step(TrajectoryState& traj, const SystemParams& params, double omega_fb) {
  const double dw = std::sqrt(params.dt) * traj.rng.normal();
  return step_with_noise(traj, params, omega_fb, dw);
}

StepResult step_with_record(TrajectoryState& traj, const SystemParams& params,
                            double omega_fb, double dy) {
  const auto coeffs = kernels::StepCoefficients::from(params);
  const double dw = dy - coeffs.dy_gain * traj.state.r.q;
  StepResult res = step_with_noise(traj, params, omega_fb, dw);
  // Keep the record itself rather than its reconstruction.
  res.dy = dy;
  traj.last_dy = dy;
  return res;
}

Snapshot snapshot_of(const TrajectoryState& traj, double omega_fb) {
  return {traj.t,       traj.step_index, traj.state, traj.tangent, omega_fb,
          traj.last_dy, traj.fhom_integral};
}

void write_trace_csv(std::ostream& os, std::span<const Snapshot> series) {
  os << "t,r_q,r_p,s_qq,s_qp,s_pp,dr_q,dr_p,ds_qq,ds_qp,ds_pp,omega_fb,dy,fhom_integral\n";
  csv::RowWriter row(os);
  for (const auto& s : series) {
    row << s.t << s.state.r.q << s.state.r.p << s.state.sigma.qq << s.state.sigma.qp
        << s.state.sigma.pp << s.tangent.dr.q << s.tangent.dr.p << s.tangent.dsigma.qq
        << s.tangent.dsigma.qp << s.tangent.dsigma.pp << s.omega_fb << s.dy << s.fhom_integral;
    row.end();
  }
}

}  // namespace qmetro
