#pragma once

// Fisher information of the conditional Gaussian state and of the
// measurement record, ensemble reduction and the final homodyne readout.

#include <cstddef>
#include <ostream>
#include <span>
#include <vector>

#include "qmetro/gaussian.hpp"
#include "qmetro/trajectory.hpp"

namespace qmetro {

/// Below this value of 1 - mu^4 the purity term of the QFI is dropped.
inline constexpr double kPureStateEpsilon = 1e-9;

/// QFI of a single-mode Gaussian family with respect to omega:
/// Tr[(s^-1 ds)^2] / (2 (1 + mu^2)) + 2 dmu^2 / (1 - mu^4) + 2 dr^T s^-1 dr.
/// Throws ParameterError for a singular or non-positive covariance.
double gaussian_qfi(const GaussianState& state, const TangentState& tangent);

/// 2 dt eta kappa dr_q^2, same arithmetic as the step kernel.
double fhom_increment(const TangentState& tangent, const SystemParams& params);

/// fhom_increment(before) + Q(after) - Q(before). Summed over an episode this
/// telescopes to fhom_integral + Q(end) - Q(start).
double reward_increment(const TrajectoryState& before, const TrajectoryState& after,
                        const SystemParams& params);

struct FisherSample {
  double fhom_integral = 0.0;
  double qfi = 0.0;
};

inline FisherSample fisher_sample(const Snapshot& s) {
  return {s.fhom_integral, gaussian_qfi(s.state, s.tangent)};
}

struct FisherReport {
  std::vector<double> times;
  std::vector<double> fhom_over_t;   // NaN at t = 0
  std::vector<double> qbar_c;
  std::vector<double> qeff_over_t;   // NaN at t = 0
  std::vector<double> stderr_fhom;   // of F_hom
  std::vector<double> stderr_qbar;   // of Q_c
  std::vector<double> stderr_qeff;   // of Q_eff / t, NaN at t = 0
  std::size_t n_traj = 0;
};

/// samples[k][i] belongs to trajectory k at times[i]. Trajectories with
/// include[k] == 0 are skipped (pass an empty span to use all). Means use
/// compensated summation. Throws ParameterError if nothing is left.
FisherReport effective_qfi(std::span<const double> times,
                           std::span<const std::vector<FisherSample>> samples,
                           std::span<const char> failed = {});

/// Bound on delta-omega sqrt(T): 1 / sqrt(qeff / t).
double qcrb_bound(double qeff, double t);

/// CSV columns t, fhom_over_t, qbar_c, qeff_over_t, stderr_qeff, n_traj.
void write_fisher_csv(std::ostream& os, const FisherReport& report);

inline constexpr double kHomodyneZ = 1e-8;

/// Projective Gaussian measurement with covariance R(theta) diag(z, 1/z) R(theta)^T.
struct StrongMeasurementSpec {
  double theta = 0.0;
  double z = kHomodyneZ;

  Sym2 measurement_covariance() const;
};

/// Classical FI of the outcome distribution N(r, (sigma + sigma_m)/2).
double final_homodyne_fi(const GaussianState& state, const TangentState& tangent,
                         const StrongMeasurementSpec& spec);

struct HomodyneOptimum {
  double theta = 0.0;  // in [-pi/2, pi/2)
  double fi = 0.0;
};

/// 181-point grid over [-pi/2, pi/2] followed by golden-section refinement
/// to 1e-6 rad around the best grid point.
HomodyneOptimum optimize_final_homodyne(const GaussianState& state, const TangentState& tangent,
                                        double z = kHomodyneZ);

}  // namespace qmetro
