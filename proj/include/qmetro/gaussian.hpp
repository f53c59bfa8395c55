#pragma once

// Model matrices, stability and steady states of a homodyne-monitored
// bosonic mode with a single-mode squeezing Hamiltonian, plus scalar
// diagnostics of Gaussian states. Covariances use the vacuum = identity
// convention.

#include <optional>
#include <stdexcept>
#include <string>

#include "qmetro/linalg.hpp"

namespace qmetro {

/// Threshold on |r| below which the first-moment direction is undefined.
inline constexpr double kDegenerateMomentNorm = 1e-6;
/// Tolerance on det(sigma) >= 1 for externally supplied states.
inline constexpr double kPhysicalDetTolerance = 1e-9;

class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Physical constants (rates in units of kappa) and the integration step.
struct SystemParams {
  double omega = 0.1;
  double chi = 0.49;
  double kappa = 1.0;
  double eta = 0.9;
  double dt = 1e-3;

  /// Throws ParameterError unless kappa > 0, dt > 0, 0 <= eta <= 1 and
  /// chi < kappa/2 (the uncontrolled dynamics must be stable).
  void validate() const;
};

struct SystemMatrices {
  Mat2 drift;        // A
  Sym2 diffusion;    // D = kappa * I
  Mat2 measurement;  // B (= E)
  Mat2 d_drift;      // dA/domega

  const Mat2& e() const { return measurement; }
};

struct GaussianState {
  Vec2 r;
  Sym2 sigma = Sym2::identity();
};

/// Drift with the feedback rotation omega_fb added to omega.
SystemMatrices build_matrices(const SystemParams& params, double omega_fb);

/// Exact Hurwitz test: both eigenvalues with strictly negative real part.
bool stability_check(const Mat2& a);

/// Analytic conditional steady state for zero net rotation.
/// Valid for chi < kappa/2; eta = 0 gives the unmonitored limit.
Sym2 steady_state_covariance(const SystemParams& params);

/// Fixed point of the Riccati equation for an arbitrary constant rotation
/// omega_total = omega + omega_fb. Requires a Hurwitz drift.
Sym2 riccati_steady_state(const SystemParams& params, double omega_fb);

/// Right-hand side of the covariance Riccati equation.
Sym2 riccati_rhs(const SystemParams& params, double omega_fb, const Sym2& sigma);

/// -10 log10 of the minimum eigenvalue; positive means below vacuum.
double squeezing_db(const Sym2& sigma);

/// Squeezing along the quadrature orthogonal to the first-moment vector,
/// or nullopt when |r| <= kDegenerateMomentNorm.
std::optional<double> perpendicular_squeezing_db(const GaussianState& state);

/// min(1, 1/sqrt(det sigma)). Throws ParameterError when det sigma < 1 - 1e-9.
double purity(const Sym2& sigma);

/// Throws ParameterError describing the first violated invariant.
void validate_state(const GaussianState& state);

}  // namespace qmetro
