#include "qmetro/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

namespace qmetro {

InitialCondition InitSampler::sample(std::uint64_t seed, std::uint32_t index) const {
  if (!randomize) return fixed;
  RngStream rng(StreamKey{seed, index, StreamPurpose::initial_condition});
  InitialCondition ic;
  ic.r0.q = rng.uniform(-r_max, r_max);
  ic.r0.p = rng.uniform(-r_max, r_max);
  ic.n_th = rng.uniform(0.0, n_th_max);
  return ic;
}

std::vector<std::int64_t> record_steps(std::int64_t horizon_steps, std::int64_t stride,
                                       const std::vector<std::int64_t>& extra) {
  if (horizon_steps < 0) throw ParameterError("horizon must be >= 0");
  if (stride <= 0) throw ParameterError("record stride must be positive");
  std::vector<std::int64_t> steps;
  for (std::int64_t s = 0; s <= horizon_steps; s += stride) steps.push_back(s);
  steps.push_back(horizon_steps);
  for (auto s : extra) steps.push_back(std::clamp<std::int64_t>(s, 0, horizon_steps));
  std::sort(steps.begin(), steps.end());
  steps.erase(std::unique(steps.begin(), steps.end()), steps.end());
  return steps;
}

namespace {

using kernels::kLanes;

enum class FailureKind { none, unphysical, policy };

struct LaneStatus {
  FailureKind kind = FailureKind::none;
  std::int64_t step = 0;
  std::string message;
};

// Up to kLanes trajectories advanced in lockstep through the lane kernel.
class BlockRunner {
 public:
  BlockRunner(const SystemParams& params, const InitSampler& init, std::uint64_t seed,
              std::uint32_t first_index, std::size_t n)
      : params_(params), coeffs_(kernels::StepCoefficients::from(params)), n_(n) {
    for (std::size_t l = 0; l < n_; ++l) {
      const auto index = static_cast<std::uint32_t>(first_index + l);
      lanes_[l] = reset(params, init.sample(seed, index),
                        StreamKey{seed, index, StreamPurpose::measurement_noise});
      policy_noise_[l] = RngStream(StreamKey{seed, index, StreamPurpose::policy_noise});
      load_lane(block_, l, lanes_[l]);
    }
    // Padding lanes carry a copy of lane 0 with zero inputs; never reported.
    for (std::size_t l = n_; l < kLanes; ++l) load_lane(block_, l, lanes_[0]);
  }

  template <class Emit>
  void run(std::int64_t horizon, const Policy& policy, const std::vector<std::int64_t>& steps,
           Emit&& emit) {
    std::size_t next_rec = 0;
    while (next_rec < steps.size() && steps[next_rec] < 0) ++next_rec;
    const double sqrt_dt = std::sqrt(params_.dt);
    double last_dy[kLanes] = {};
    for (std::int64_t n = 0;; ++n) {
      const bool record = next_rec < steps.size() && steps[next_rec] == n;
      if (n == horizon && !record) break;

      Observation obs[kLanes];
      for (std::size_t l = 0; l < n_; ++l) obs[l] = observe(l, last_dy[l]);
      double action[kLanes] = {};
      policy.act_lanes({obs, n_}, params_, {policy_noise_, n_}, {action, n_});
      for (std::size_t l = 0; l < n_; ++l) {
        if (status_[l].kind == FailureKind::none && !std::isfinite(action[l])) {
          fail(l, FailureKind::policy, n, "policy '" + policy.name() + "' returned a non-finite action");
        }
      }
      if (record) {
        for (std::size_t l = 0; l < n_; ++l) {
          if (status_[l].kind != FailureKind::none) continue;
          emit(l, next_rec, snapshot(l, n, action[l], last_dy[l]));
        }
        ++next_rec;
      }
      if (n == horizon) break;

      double dw[kLanes] = {};
      for (std::size_t l = 0; l < n_; ++l) {
        // Failed lanes keep drawing so stream positions stay aligned with step count.
        const double z = lanes_[l].rng.normal();
        if (status_[l].kind == FailureKind::none) {
          dw[l] = sqrt_dt * z;
        } else {
          action[l] = 0.0;
        }
      }
      double dy[kLanes] = {};
      kernels::step_lanes(coeffs_, block_, action, dw, dy, n_);
      for (std::size_t l = 0; l < n_; ++l) {
        last_dy[l] = dy[l];
        if (status_[l].kind != FailureKind::none) continue;
        const GaussianState s{{block_.r_q[l], block_.r_p[l]},
                              {block_.s_qq[l], block_.s_qp[l], block_.s_pp[l]}};
        const TangentState g{{block_.dr_q[l], block_.dr_p[l]},
                             {block_.ds_qq[l], block_.ds_qp[l], block_.ds_pp[l]}};
        if (auto why = check_step_state(s, g, params_); !why.empty()) {
          fail(l, FailureKind::unphysical, n + 1, why);
        }
      }
      steps_done_ = n + 1;
      bool any_alive = false;
      for (std::size_t l = 0; l < n_; ++l) any_alive = any_alive || status_[l].kind == FailureKind::none;
      if (!any_alive) break;
    }
    for (std::size_t l = 0; l < n_; ++l) {
      store_lane(block_, l, lanes_[l]);
      lanes_[l].step_index = steps_done_;
      lanes_[l].t = static_cast<double>(steps_done_) * params_.dt;
      lanes_[l].last_dy = last_dy[l];
    }
  }

  const LaneStatus& status(std::size_t l) const { return status_[l]; }
  const TrajectoryState& lane(std::size_t l) const { return lanes_[l]; }

 private:
  Observation observe(std::size_t l, double dy) const {
    const auto& k = block_;
    return {{k.r_q[l], k.r_p[l], k.s_qq[l], k.s_qp[l], k.s_pp[l], k.dr_q[l], k.dr_p[l],
             k.ds_qq[l], k.ds_qp[l], k.ds_pp[l], dy}};
  }

  Snapshot snapshot(std::size_t l, std::int64_t n, double omega_fb, double dy) const {
    const auto& k = block_;
    Snapshot s;
    s.t = static_cast<double>(n) * params_.dt;
    s.step = n;
    s.state = {{k.r_q[l], k.r_p[l]}, {k.s_qq[l], k.s_qp[l], k.s_pp[l]}};
    s.tangent = {{k.dr_q[l], k.dr_p[l]}, {k.ds_qq[l], k.ds_qp[l], k.ds_pp[l]}};
    s.omega_fb = omega_fb;
    s.dy = dy;
    s.fhom_integral = k.fhom[l];
    return s;
  }

  void fail(std::size_t l, FailureKind kind, std::int64_t step, std::string message) {
    status_[l] = {kind, step, std::move(message)};
  }

  SystemParams params_;
  kernels::StepCoefficients coeffs_;
  std::size_t n_;
  kernels::LaneBlock block_{};
  TrajectoryState lanes_[kLanes];
  RngStream policy_noise_[kLanes];
  LaneStatus status_[kLanes];
  std::int64_t steps_done_ = 0;
};

}  // namespace

TrajectoryRun run_trajectory(const SystemParams& params, const InitialCondition& init,
                             std::uint64_t seed, std::int64_t horizon_steps, const Policy& policy,
                             const std::vector<std::int64_t>& steps, std::uint32_t index) {
  if (horizon_steps < 0) throw ParameterError("horizon must be >= 0");
  InitSampler sampler;
  sampler.fixed = init;
  BlockRunner runner(params, sampler, seed, index, 1);
  TrajectoryRun out;
  runner.run(horizon_steps, policy, steps,
             [&](std::size_t, std::size_t, const Snapshot& s) { out.series.push_back(s); });
  const auto& st = runner.status(0);
  if (st.kind == FailureKind::unphysical) throw UnphysicalStateError(st.step, st.message);
  if (st.kind == FailureKind::policy) {
    throw PolicyError("step " + std::to_string(st.step) + ": " + st.message);
  }
  out.final_state = runner.lane(0);
  return out;
}

EnsembleSummary run_ensemble(const EnsembleSpec& spec, const Policy& policy,
                             const SnapshotVisitor& visit) {
  if (spec.n_traj < 1) throw ParameterError("ensemble needs at least one trajectory");
  if (spec.horizon_steps < 0) throw ParameterError("horizon must be >= 0");
  if (spec.n_traj > std::size_t{0xFFFFFFFFu}) throw ParameterError("too many trajectories");
  spec.params.validate();

  const std::size_t n_blocks = (spec.n_traj + kLanes - 1) / kLanes;
  std::vector<std::vector<TrajectoryFailure>> block_failures(n_blocks);
  std::atomic<std::size_t> next_block{0};
  std::exception_ptr error;
  std::mutex error_mutex;

  auto worker = [&] {
    for (;;) {
      const std::size_t b = next_block.fetch_add(1);
      if (b >= n_blocks) return;
      try {
        const std::size_t first = b * kLanes;
        const std::size_t n = std::min(kLanes, spec.n_traj - first);
        BlockRunner runner(spec.params, spec.init, spec.base_seed,
                           static_cast<std::uint32_t>(first), n);
        runner.run(spec.horizon_steps, policy, spec.steps,
                   [&](std::size_t lane, std::size_t rec, const Snapshot& s) {
                     visit(first + lane, rec, s);
                   });
        for (std::size_t l = 0; l < n; ++l) {
          const auto& st = runner.status(l);
          if (st.kind != FailureKind::none) {
            block_failures[b].push_back({first + l, st.step, st.message});
          }
        }
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next_block.store(n_blocks);
        return;
      }
    }
  };

  unsigned jobs = spec.jobs ? spec.jobs : std::max(1u, std::thread::hardware_concurrency());
  jobs = static_cast<unsigned>(std::min<std::size_t>(jobs, n_blocks));
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned i = 0; i < jobs; ++i) pool.emplace_back(worker);
  }
  if (error) std::rethrow_exception(error);

  EnsembleSummary summary;
  for (auto s : spec.steps) summary.times.push_back(static_cast<double>(s) * spec.params.dt);
  summary.failed.assign(spec.n_traj, 0);
  for (auto& fs : block_failures) {
    for (auto& f : fs) {
      summary.failed[f.index] = 1;
      summary.failures.push_back(std::move(f));
    }
  }
  summary.n_ok = spec.n_traj - summary.failures.size();
  return summary;
}

EnsembleRecords collect_ensemble(const EnsembleSpec& spec, const Policy& policy) {
  EnsembleRecords out;
  out.records.assign(spec.n_traj, std::vector<Snapshot>(spec.steps.size()));
  out.summary = run_ensemble(spec, policy, [&](std::size_t k, std::size_t rec, const Snapshot& s) {
    out.records[k][rec] = s;
  });
  return out;
}

}  // namespace qmetro
