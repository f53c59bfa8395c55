#pragma once

// Reinforcement-learning episodes over the trajectory engine: one scalar
// session, and a batch of sessions with automatic reset.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "qmetro/policy.hpp"
#include "qmetro/simulation.hpp"
#include "qmetro/trajectory.hpp"

namespace qmetro {

struct EpisodeConfig {
  SystemParams params;
  std::int64_t horizon_steps = 100000;
  bool randomize_init = false;
  InitialCondition fixed_init{{0.0, 0.0}, 5.0};
  int obs_layout_version = kObservationLayoutVersion;

  /// Throws ParameterError.
  void validate() const;
  InitSampler sampler() const;
};

/// Raised for requests that are invalid in the current session state.
class EnvError : public std::runtime_error {
 public:
  EnvError(std::string code, const std::string& msg)
      : std::runtime_error(msg), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

struct StepInfo {
  double t = 0.0;
  double fhom_integral = 0.0;
  double qfi = 0.0;
  std::int64_t step = 0;
};

struct StepOutcome {
  Observation obs;
  double reward = 0.0;
  /// Both set when the horizon is reached; a time limit is the only way an
  /// episode ends, so the trainer decides which flag to honour.
  bool done = false;
  bool truncated = false;
  StepInfo info;
};

class EnvSession {
 public:
  explicit EnvSession(EpisodeConfig config);

  /// Starts an episode. Noise uses StreamKey{seed, 0}, so a NoControl episode
  /// replays run_trajectory(seed) exactly.
  Observation reset(std::uint64_t seed);

  /// Applies omega_fb = action for one dt. Throws EnvError("no_episode")
  /// before reset or after the episode ended, EnvError("unphysical_state")
  /// when integration fails (the episode is then over).
  StepOutcome step(double action);

  bool in_episode() const { return active_; }
  const TrajectoryState& trajectory() const { return traj_; }
  const EpisodeConfig& config() const { return config_; }
  StepInfo info() const;

 private:
  EpisodeConfig config_;
  TrajectoryState traj_;
  double qfi_ = 0.0;
  bool active_ = false;
};

struct VecStepOutcome {
  std::vector<StepOutcome> envs;
  /// For envs that finished this step: last observation of the old episode
  /// and the seed of the episode that replaced it.
  std::vector<std::optional<Observation>> final_obs;
  std::vector<std::optional<std::uint64_t>> episode_seed;
};

/// n_envs sessions stepped in lockstep. An env whose episode ends is reset at
/// once with seed mix_seed(previous seed, episode count) and its reply
/// carries the new episode's first observation.
class VecEnv {
 public:
  VecEnv(EpisodeConfig config, std::size_t n_envs);

  std::size_t size() const { return envs_.size(); }

  /// Env i gets seeds[i].
  std::vector<Observation> reset(const std::vector<std::uint64_t>& seeds);
  /// Env i gets base_seed + i.
  std::vector<Observation> reset(std::uint64_t base_seed);

  /// Throws EnvError("batch_size") when actions.size() != size().
  VecStepOutcome step(const std::vector<double>& actions);

  const EnvSession& env(std::size_t i) const { return envs_[i]; }

 private:
  std::vector<EnvSession> envs_;
  std::vector<std::uint64_t> seeds_;
  std::vector<std::uint64_t> episodes_;
};

}  // namespace qmetro
