#pragma once

// Policy-driven trajectories and reproducible Monte Carlo ensembles.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "qmetro/policy.hpp"
#include "qmetro/trajectory.hpp"

namespace qmetro {

/// Initial conditions per trajectory: fixed, or drawn uniformly with
/// r components in [-r_max, r_max] and n_th in [0, n_th_max].
struct InitSampler {
  InitialCondition fixed;
  bool randomize = false;
  double r_max = 3.0;
  double n_th_max = 5.0;

  InitialCondition sample(std::uint64_t seed, std::uint32_t index) const;
};

/// Sorted unique record steps: 0, stride, 2 stride, ..., plus horizon and
/// any extra steps (clipped to [0, horizon]).
std::vector<std::int64_t> record_steps(std::int64_t horizon_steps, std::int64_t stride,
                                       const std::vector<std::int64_t>& extra = {});

struct TrajectoryRun {
  TrajectoryState final_state;
  std::vector<Snapshot> series;
};

/// Runs one trajectory under `policy` for horizon_steps steps. Noise uses
/// StreamKey{seed, index}; a snapshot is taken at every step listed in
/// `steps` (the recorded omega_fb is the action chosen at that time).
/// Throws UnphysicalStateError or PolicyError with the failing step.
TrajectoryRun run_trajectory(const SystemParams& params, const InitialCondition& init,
                             std::uint64_t seed, std::int64_t horizon_steps, const Policy& policy,
                             const std::vector<std::int64_t>& steps, std::uint32_t index = 0);

struct EnsembleSpec {
  SystemParams params;
  InitSampler init;
  std::size_t n_traj = 1;
  std::int64_t horizon_steps = 0;
  std::vector<std::int64_t> steps;  // record steps, see record_steps()
  std::uint64_t base_seed = 0;
  unsigned jobs = 0;                // 0: hardware concurrency
};

struct TrajectoryFailure {
  std::size_t index = 0;
  std::int64_t step = 0;
  std::string message;
};

struct EnsembleSummary {
  std::vector<double> times;   // t of every record step
  std::vector<char> failed;    // per trajectory
  std::vector<TrajectoryFailure> failures;  // sorted by index
  std::size_t n_ok = 0;
};

/// Receives (trajectory index, record index, snapshot). Called concurrently
/// for different trajectories; must only touch per-trajectory storage.
using SnapshotVisitor = std::function<void(std::size_t, std::size_t, const Snapshot&)>;

/// Trajectory k uses noise StreamKey{base_seed, k}; results do not depend on
/// spec.jobs. A failed trajectory stops emitting snapshots and is listed in
/// the summary.
EnsembleSummary run_ensemble(const EnsembleSpec& spec, const Policy& policy,
                             const SnapshotVisitor& visit);

struct EnsembleRecords {
  EnsembleSummary summary;
  std::vector<std::vector<Snapshot>> records;  // [trajectory][record index]
};

/// run_ensemble keeping every snapshot in memory.
EnsembleRecords collect_ensemble(const EnsembleSpec& spec, const Policy& policy);

}  // namespace qmetro
