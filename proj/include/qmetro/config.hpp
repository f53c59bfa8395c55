#pragma once

// Experiment configuration in a plain `key = value` text format.
//
//   # comment
//   omega = 0.1
//   strategies = none, open_loop, neural
//   weights = agent.qmw
//
// Lists are comma separated. Unknown keys are an error. See README for the
// full key list.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "qmetro/env.hpp"
#include "qmetro/gaussian.hpp"
#include "qmetro/trajectory.hpp"

namespace qmetro {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  SystemParams params;                  // omega, chi, kappa, eta, dt
  std::vector<std::string> strategies{"none", "open_loop"};
  std::filesystem::path weights;        // for the neural strategy
  bool deterministic = true;
  std::optional<double> action_bound;
  std::size_t n_traj = 5000;
  double horizon = 20.0;                // in 1/kappa
  std::optional<std::int64_t> horizon_steps;  // overrides horizon
  std::int64_t stride = 100;
  std::uint64_t seed = 1;
  InitialCondition init{{0.0, 0.0}, 5.0};
  bool randomize_init = false;
  std::vector<double> sample_times;     // hist-perp / scatter; empty = horizon
  std::size_t n_sample_traces = 5;      // omega-fb
  std::string sweep_param = "chi";      // chi | eta
  std::vector<double> sweep_values{0.0, 0.25, 0.4, 0.49};
  unsigned jobs = 0;
  std::filesystem::path output_dir = ".";

  std::int64_t total_steps() const;
  /// Record steps including the sample times.
  std::vector<std::int64_t> grid() const;
  /// Throws ConfigError.
  void validate() const;
};

/// Parses config text; `origin` names the source in error messages.
ExperimentConfig parse_config(const std::string& text, const std::string& origin = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

/// Episode settings for the env server: params, horizon, init and
/// randomize_init are taken from the same keys.
EpisodeConfig episode_config(const ExperimentConfig& cfg);

/// Canonical text for a config; parse_config(render_config(c)) == c.
std::string render_config(const ExperimentConfig& cfg);

}  // namespace qmetro
