#include "qmetro/env.hpp"

#include "qmetro/metrology.hpp"

namespace qmetro {

void EpisodeConfig::validate() const {
  params.validate();
  if (horizon_steps < 1) throw ParameterError("horizon_steps must be >= 1");
  if (obs_layout_version != kObservationLayoutVersion) {
    throw ParameterError("unsupported observation layout v" + std::to_string(obs_layout_version));
  }
  if (!(fixed_init.n_th >= 0.0)) throw ParameterError("n_th must be >= 0");
}

InitSampler EpisodeConfig::sampler() const {
  InitSampler s;
  s.fixed = fixed_init;
  s.randomize = randomize_init;
  return s;
}

EnvSession::EnvSession(EpisodeConfig config) : config_(std::move(config)) { config_.validate(); }

Observation EnvSession::reset(std::uint64_t seed) {
  traj_ = qmetro::reset(config_.params, config_.sampler().sample(seed, 0),
                        StreamKey{seed, 0, StreamPurpose::measurement_noise});
  qfi_ = gaussian_qfi(traj_.state, traj_.tangent);
  active_ = true;
  return Observation::of(traj_);
}

StepInfo EnvSession::info() const {
  return {traj_.t, traj_.fhom_integral, qfi_, traj_.step_index};
}

StepOutcome EnvSession::step(double action) {
  if (!active_) throw EnvError("no_episode", "step without an active episode; send reset first");
  if (!std::isfinite(action)) throw EnvError("bad_request", "action must be finite");
  const double fhom = fhom_increment(traj_.tangent, config_.params);
  try {
    qmetro::step(traj_, config_.params, action);
  } catch (const UnphysicalStateError& e) {
    active_ = false;
    throw EnvError("unphysical_state", e.what());
  }
  const double q = gaussian_qfi(traj_.state, traj_.tangent);
  StepOutcome out;
  out.reward = fhom + (q - qfi_);
  qfi_ = q;
  out.obs = Observation::of(traj_);
  out.done = out.truncated = traj_.step_index >= config_.horizon_steps;
  if (out.done) active_ = false;
  out.info = info();
  return out;
}

VecEnv::VecEnv(EpisodeConfig config, std::size_t n_envs) {
  if (n_envs < 1) throw ParameterError("n_envs must be >= 1");
  envs_.assign(n_envs, EnvSession(std::move(config)));
  seeds_.assign(n_envs, 0);
  episodes_.assign(n_envs, 0);
}

std::vector<Observation> VecEnv::reset(const std::vector<std::uint64_t>& seeds) {
  if (seeds.size() != envs_.size()) {
    throw EnvError("batch_size", "expected " + std::to_string(envs_.size()) + " seeds, got " +
                                     std::to_string(seeds.size()));
  }
  std::vector<Observation> obs;
  for (std::size_t i = 0; i < envs_.size(); ++i) {
    seeds_[i] = seeds[i];
    episodes_[i] = 0;
    obs.push_back(envs_[i].reset(seeds[i]));
  }
  return obs;
}

std::vector<Observation> VecEnv::reset(std::uint64_t base_seed) {
  std::vector<std::uint64_t> seeds(envs_.size());
  for (std::size_t i = 0; i < seeds.size(); ++i) seeds[i] = base_seed + i;
  return reset(seeds);
}

VecStepOutcome VecEnv::step(const std::vector<double>& actions) {
  if (actions.size() != envs_.size()) {
    throw EnvError("batch_size", "expected " + std::to_string(envs_.size()) +
                                     " actions, got " + std::to_string(actions.size()));
  }
  for (const auto& e : envs_) {
    if (!e.in_episode()) throw EnvError("no_episode", "step without an active episode; send reset first");
  }
  VecStepOutcome out;
  out.envs.reserve(envs_.size());
  out.final_obs.assign(envs_.size(), std::nullopt);
  out.episode_seed.assign(envs_.size(), std::nullopt);
  for (std::size_t i = 0; i < envs_.size(); ++i) {
    StepOutcome r = envs_[i].step(actions[i]);
    if (r.done) {
      out.final_obs[i] = r.obs;
      ++episodes_[i];
      seeds_[i] = mix_seed(seeds_[i], episodes_[i]);
      out.episode_seed[i] = seeds_[i];
      r.obs = envs_[i].reset(seeds_[i]);
    }
    out.envs.push_back(std::move(r));
  }
  return out;
}

}  // namespace qmetro
