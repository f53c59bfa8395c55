#pragma once

// Batch analyses over trajectory ensembles. Every command writes CSV files
// into cfg.output_dir and returns their paths. Output depends only on the
// config (including seed), never on cfg.jobs.

#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "qmetro/config.hpp"
#include "qmetro/policy.hpp"

namespace qmetro {

class ExperimentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kHistMinDb = -10.0;
inline constexpr double kHistMaxDb = 10.0;
inline constexpr double kHistBinDb = 0.25;

/// none | open_loop | neural (weights from cfg.weights).
std::unique_ptr<Policy> make_policy(const std::string& strategy, const ExperimentConfig& cfg);

using Outputs = std::vector<std::filesystem::path>;

/// trace_<strategy>.csv: strided time series of trajectory 0.
Outputs cmd_simulate(const ExperimentConfig& cfg);
/// compare_<strategy>.csv (FisherReport) and the merged compare.csv.
Outputs cmd_compare(const ExperimentConfig& cfg);
/// hist_perp_<strategy>.csv: perpendicular squeezing histograms at the
/// sample times.
Outputs cmd_hist_perp(const ExperimentConfig& cfg);
/// mean_abs_r.csv: E[|r|](t) with standard errors per strategy.
Outputs cmd_mean_abs_r(const ExperimentConfig& cfg);
/// omega_fb_<strategy>.csv: ensemble mean/std of omega_fb plus sample traces.
Outputs cmd_omega_fb(const ExperimentConfig& cfg);
/// scatter_<strategy>.csv: one row per trajectory and sample time.
Outputs cmd_scatter(const ExperimentConfig& cfg);
/// final_homodyne_<strategy>.csv: final homodyne FI ratios vs t.
Outputs cmd_final_homodyne(const ExperimentConfig& cfg);
/// compare runs over cfg.sweep_values of cfg.sweep_param plus sweep_<param>.csv.
Outputs cmd_sweep(const ExperimentConfig& cfg);

/// Dispatch by command name; throws ExperimentError for unknown names.
Outputs run_command(const std::string& name, const ExperimentConfig& cfg);
const std::vector<std::string>& command_names();

}  // namespace qmetro
