#include "qmetro/gaussian.hpp"

#include <cmath>
#include <sstream>

namespace qmetro {

void SystemParams::validate() const {
  std::ostringstream err;
  if (!(kappa > 0.0)) {
    err << "kappa must be positive (got " << kappa << ")";
  } else if (!(dt > 0.0)) {
    err << "dt must be positive (got " << dt << ")";
  } else if (!(eta >= 0.0 && eta <= 1.0)) {
    err << "eta must lie in [0, 1] (got " << eta << ")";
  } else if (!std::isfinite(omega) || !std::isfinite(chi)) {
    err << "omega and chi must be finite";
  } else if (!(chi < 0.5 * kappa)) {
    err << "chi must be below kappa/2 for a stable steady state (got chi=" << chi
        << ", kappa=" << kappa << ")";
  } else if (!stability_check(build_matrices(*this, 0.0).drift)) {
    err << "drift matrix is not Hurwitz";
  } else {
    return;
  }
  throw ParameterError(err.str());
}

SystemMatrices build_matrices(const SystemParams& params, double omega_fb) {
  const double w = params.omega + omega_fb;
  const double b = -std::sqrt(params.eta * params.kappa);
  SystemMatrices m;
  m.drift = {-(params.chi + 0.5 * params.kappa), w, -w, params.chi - 0.5 * params.kappa};
  m.diffusion = Sym2::diag(params.kappa, params.kappa);
  m.measurement = {b, 0.0, 0.0, 0.0};
  m.d_drift = {0.0, 1.0, -1.0, 0.0};
  return m;
}

bool stability_check(const Mat2& a) {
  // For 2x2 real matrices Re(eig) < 0 for both eigenvalues iff tr < 0, det > 0.
  return a.trace() < 0.0 && a.det() > 0.0;
}

Sym2 steady_state_covariance(const SystemParams& params) {
  const double k = params.kappa;
  const double chi = params.chi;
  const double eta = params.eta;
  if (!(chi < 0.5 * k)) {
    throw ParameterError("steady_state_covariance: requires chi < kappa/2");
  }
  if (!(eta >= 0.0 && eta <= 1.0) || !(k > 0.0)) {
    throw ParameterError("steady_state_covariance: invalid eta or kappa");
  }
  // sigma_qq is the positive root of
  //   eta k s^2 - (k(2 eta - 1) - 2 chi) s - k (1 - eta) = 0.
  // Pick the algebraic form that avoids cancellation; the second one is the
  // eta -> 0 limit without division by eta.
  const double lin = k * (2.0 * eta - 1.0) - 2.0 * chi;
  const double root = std::sqrt(k * k - 4.0 * k * chi * (2.0 * eta - 1.0) + 4.0 * chi * chi);
  double s_qq;
  if (lin >= 0.0) {
    s_qq = (lin + root) / (2.0 * eta * k);
  } else {
    s_qq = 2.0 * k * (1.0 - eta) / (root - lin);
  }
  return Sym2::diag(s_qq, k / (k - 2.0 * chi));
}

Sym2 riccati_rhs(const SystemParams& params, double omega_fb, const Sym2& s) {
  const double w = params.omega + omega_fb;
  const double a11 = -(params.chi + 0.5 * params.kappa);
  const double a22 = params.chi - 0.5 * params.kappa;
  const double b = -std::sqrt(params.eta * params.kappa);
  // (E - sigma B) has a single nonzero column g.
  const double g1 = b * (1.0 - s.qq);
  const double g2 = -b * s.qp;
  return {2.0 * (a11 * s.qq + w * s.qp) + params.kappa - g1 * g1,
          a11 * s.qp + w * s.pp - w * s.qq + a22 * s.qp - g1 * g2,
          2.0 * (a22 * s.pp - w * s.qp) + params.kappa - g2 * g2};
}

Sym2 riccati_steady_state(const SystemParams& params, double omega_fb) {
  if (!stability_check(build_matrices(params, omega_fb).drift)) {
    throw ParameterError("riccati_steady_state: drift matrix is not Hurwitz");
  }
  // Relax with RK4 onto the stabilizing solution, then polish with Newton
  // steps on the 3-component algebraic equation.
  const double h =
      0.2 / (params.kappa + std::abs(params.chi) + std::abs(params.omega + omega_fb));
  Sym2 s = Sym2::identity();
  auto rhs = [&](const Sym2& x) { return riccati_rhs(params, omega_fb, x); };
  for (int i = 0; i < 10000000; ++i) {
    const Sym2 k1 = rhs(s);
    if (max_abs(k1) < 1e-9) break;
    const Sym2 k2 = rhs(s + (0.5 * h) * k1);
    const Sym2 k3 = rhs(s + (0.5 * h) * k2);
    const Sym2 k4 = rhs(s + h * k3);
    s = s + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  for (int it = 0; it < 20; ++it) {
    const Sym2 f = riccati_rhs(params, omega_fb, s);
    if (max_abs(f) < 1e-15) break;
    double jac[3][3];
    const double eps = 1e-7;
    for (int j = 0; j < 3; ++j) {
      Sym2 sp = s, sm = s;
      double* cp = j == 0 ? &sp.qq : j == 1 ? &sp.qp : &sp.pp;
      double* cm = j == 0 ? &sm.qq : j == 1 ? &sm.qp : &sm.pp;
      *cp += eps;
      *cm -= eps;
      const Sym2 fp = riccati_rhs(params, omega_fb, sp);
      const Sym2 fm = riccati_rhs(params, omega_fb, sm);
      jac[0][j] = (fp.qq - fm.qq) / (2 * eps);
      jac[1][j] = (fp.qp - fm.qp) / (2 * eps);
      jac[2][j] = (fp.pp - fm.pp) / (2 * eps);
    }
    // Cramer's rule on the 3x3 system jac * delta = -f.
    const double rhs[3] = {-f.qq, -f.qp, -f.pp};
    auto det3 = [](const double m[3][3]) {
      return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
             m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
             m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    };
    const double d = det3(jac);
    if (d == 0.0 || !std::isfinite(d)) break;
    double delta[3];
    for (int j = 0; j < 3; ++j) {
      double mj[3][3];
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) mj[r][c] = c == j ? rhs[r] : jac[r][c];
      delta[j] = det3(mj) / d;
    }
    s = {s.qq + delta[0], s.qp + delta[1], s.pp + delta[2]};
  }
  return s;
}

double squeezing_db(const Sym2& sigma) {
  if (!(sigma.qq > 0.0) || !(sigma.det() > 0.0)) {
    throw ParameterError("squeezing_db: covariance is not positive definite");
  }
  return -10.0 * std::log10(sigma.eigenvalues()[0]);
}

std::optional<double> perpendicular_squeezing_db(const GaussianState& state) {
  const double n = norm(state.r);
  if (!(n > kDegenerateMomentNorm)) return std::nullopt;
  // u_perp is u rotated by +90 degrees.
  const Vec2 u_perp{-state.r.p / n, state.r.q / n};
  return -10.0 * std::log10(state.sigma.quad(u_perp));
}

double purity(const Sym2& sigma) {
  const double d = sigma.det();
  if (!(d >= 1.0 - kPhysicalDetTolerance)) {
    throw ParameterError("purity: det(sigma) = " + std::to_string(d) +
                         " < 1, unphysical covariance");
  }
  return std::min(1.0, 1.0 / std::sqrt(d));
}

void validate_state(const GaussianState& state) {
  const Sym2& s = state.sigma;
  if (!std::isfinite(state.r.q) || !std::isfinite(state.r.p) || !std::isfinite(s.qq) ||
      !std::isfinite(s.qp) || !std::isfinite(s.pp)) {
    throw ParameterError("state has non-finite entries");
  }
  if (!(s.qq > 0.0 && s.pp > 0.0)) {
    throw ParameterError("covariance is not positive definite");
  }
  if (!(s.det() >= 1.0 - kPhysicalDetTolerance)) {
    throw ParameterError("covariance violates the uncertainty relation (det < 1)");
  }
}

}  // namespace qmetro
