#include "qmetro/metrology.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "qmetro/csv.hpp"

namespace qmetro {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Tr[(X^-1 Y)^2] for symmetric X, Y.
double trace_sq_product(const Sym2& x_inv, const Sym2& y) {
  const Mat2 m = x_inv.full() * y.full();
  return m.a11 * m.a11 + 2.0 * m.a12 * m.a21 + m.a22 * m.a22;
}

double trace_product(const Sym2& a, const Sym2& b) {
  return a.qq * b.qq + 2.0 * a.qp * b.qp + a.pp * b.pp;
}

// Neumaier-compensated running sum.
struct CompensatedSum {
  double sum = 0.0;
  double c = 0.0;
  void add(double x) {
    const double t = sum + x;
    if (std::abs(sum) >= std::abs(x)) {
      c += (sum - t) + x;
    } else {
      c += (x - t) + sum;
    }
    sum = t;
  }
  double value() const { return sum + c; }
};

}  // namespace

double gaussian_qfi(const GaussianState& state, const TangentState& tangent) {
  const Sym2& s = state.sigma;
  const double det = s.det();
  if (!(det > 0.0) || !(s.qq > 0.0)) {
    throw ParameterError("gaussian_qfi: covariance is singular or not positive definite");
  }
  const Sym2 inv = s.inverse();
  const Sym2& ds = tangent.dsigma;
  const double mu = 1.0 / std::sqrt(det);
  const double mu2 = mu * mu;

  double q = trace_sq_product(inv, ds) / (2.0 * (1.0 + mu2));
  const double one_minus_mu4 = 1.0 - mu2 * mu2;
  if (one_minus_mu4 >= kPureStateEpsilon) {
    const double dmu = -0.5 * mu * trace_product(inv, ds);
    q += 2.0 * dmu * dmu / one_minus_mu4;
  }
  q += 2.0 * inv.quad(tangent.dr);
  return q;
}

double fhom_increment(const TangentState& tangent, const SystemParams& params) {
  const double gain = 2.0 * params.dt * params.eta * params.kappa;
  return gain * (tangent.dr.q * tangent.dr.q);
}

double reward_increment(const TrajectoryState& before, const TrajectoryState& after,
                        const SystemParams& params) {
  return fhom_increment(before.tangent, params) +
         (gaussian_qfi(after.state, after.tangent) - gaussian_qfi(before.state, before.tangent));
}

FisherReport effective_qfi(std::span<const double> times,
                           std::span<const std::vector<FisherSample>> samples,
                           std::span<const char> failed) {
  if (!failed.empty() && failed.size() != samples.size()) {
    throw ParameterError("effective_qfi: failure mask does not match the ensemble size");
  }
  const std::size_t n_t = times.size();
  std::size_t n = 0;
  for (std::size_t k = 0; k < samples.size(); ++k) {
    if (!failed.empty() && failed[k]) continue;
    if (samples[k].size() != n_t) {
      throw ParameterError("effective_qfi: trajectory " + std::to_string(k) +
                           " does not share the time grid");
    }
    ++n;
  }
  if (n == 0) throw ParameterError("effective_qfi: empty ensemble");

  FisherReport rep;
  rep.n_traj = n;
  rep.times.assign(times.begin(), times.end());
  const double nn = static_cast<double>(n);
  for (std::size_t i = 0; i < n_t; ++i) {
    CompensatedSum f, q, f2, q2, fq;
    for (std::size_t k = 0; k < samples.size(); ++k) {
      if (!failed.empty() && failed[k]) continue;
      const auto& s = samples[k][i];
      f.add(s.fhom_integral);
      q.add(s.qfi);
    }
    const double fm = f.value() / nn;
    const double qm = q.value() / nn;
    // Second pass on deviations keeps the variance accurate.
    for (std::size_t k = 0; k < samples.size(); ++k) {
      if (!failed.empty() && failed[k]) continue;
      const auto& s = samples[k][i];
      const double a = s.fhom_integral - fm;
      const double b = s.qfi - qm;
      f2.add(a * a);
      q2.add(b * b);
      fq.add(a * b);
    }
    const double denom = n > 1 ? nn * (nn - 1.0) : kNaN;
    const double var_f = n > 1 ? f2.value() / denom : 0.0;
    const double var_q = n > 1 ? q2.value() / denom : 0.0;
    const double var_e = n > 1 ? (f2.value() + q2.value() + 2.0 * fq.value()) / denom : 0.0;
    const double t = times[i];
    rep.qbar_c.push_back(qm);
    rep.stderr_fhom.push_back(std::sqrt(var_f));
    rep.stderr_qbar.push_back(std::sqrt(var_q));
    if (t > 0.0) {
      rep.fhom_over_t.push_back(fm / t);
      rep.qeff_over_t.push_back((fm + qm) / t);
      rep.stderr_qeff.push_back(std::sqrt(std::max(0.0, var_e)) / t);
    } else {
      rep.fhom_over_t.push_back(kNaN);
      rep.qeff_over_t.push_back(kNaN);
      rep.stderr_qeff.push_back(kNaN);
    }
  }
  return rep;
}

double qcrb_bound(double qeff, double t) {
  if (!(qeff > 0.0)) throw ParameterError("qcrb_bound: qeff must be positive");
  if (!(t > 0.0)) throw ParameterError("qcrb_bound: t must be positive");
  return 1.0 / std::sqrt(qeff / t);
}

void write_fisher_csv(std::ostream& os, const FisherReport& r) {
  os << "t,fhom_over_t,qbar_c,qeff_over_t,stderr_qeff,n_traj\n";
  csv::RowWriter w(os);
  for (std::size_t i = 0; i < r.times.size(); ++i) {
    w << r.times[i] << r.fhom_over_t[i] << r.qbar_c[i] << r.qeff_over_t[i] << r.stderr_qeff[i]
      << r.n_traj;
    w.end();
  }
}

Sym2 StrongMeasurementSpec::measurement_covariance() const {
  if (!(z > 0.0)) throw ParameterError("measurement squeezing z must be positive");
  const Mat2 rot = Mat2::rotation(std::cos(theta), std::sin(theta));
  return congruence(rot, Sym2::diag(z, 1.0 / z));
}

double final_homodyne_fi(const GaussianState& state, const TangentState& tangent,
                         const StrongMeasurementSpec& spec) {
  const Sym2 big = 0.5 * (state.sigma + spec.measurement_covariance());
  const Sym2 dbig = 0.5 * tangent.dsigma;
  const Sym2 inv = big.inverse();
  return inv.quad(tangent.dr) + 0.5 * trace_sq_product(inv, dbig);
}

HomodyneOptimum optimize_final_homodyne(const GaussianState& state, const TangentState& tangent,
                                        double z) {
  constexpr double pi = std::numbers::pi;
  constexpr int kGrid = 181;
  auto fi = [&](double th) { return final_homodyne_fi(state, tangent, {th, z}); };

  int best = 0;
  double best_fi = -1.0;
  const double h = pi / (kGrid - 1);
  for (int i = 0; i < kGrid; ++i) {
    const double v = fi(-0.5 * pi + i * h);
    if (v > best_fi) {
      best_fi = v;
      best = i;
    }
  }
  // Golden-section on the bracket around the best grid point; FI has period
  // pi in theta so the bracket may wrap past the ends.
  double a = -0.5 * pi + (best - 1) * h;
  double b = -0.5 * pi + (best + 1) * h;
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = b - inv_phi * (b - a);
  double x2 = a + inv_phi * (b - a);
  double f1 = fi(x1), f2 = fi(x2);
  while (b - a > 1e-6) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = fi(x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = fi(x1);
    }
  }
  double theta = 0.5 * (a + b);
  double value = fi(theta);
  if (value < best_fi) {
    theta = -0.5 * pi + best * h;
    value = best_fi;
  }
  // Wrap into [-pi/2, pi/2).
  theta = std::remainder(theta, pi);
  if (theta >= 0.5 * pi) theta -= pi;
  return {theta, value};
}

}  // namespace qmetro
