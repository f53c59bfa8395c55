#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "families.hpp"
#include "oracles.hpp"
#include "qmetro/metrology.hpp"
#include "qmetro/policy.hpp"
#include "qmetro/simulation.hpp"

using namespace qmetro;
using doctest::Approx;
constexpr double pi = std::numbers::pi;

using testfam::random_family;

TEST_CASE("gaussian_qfi examples") {
  CHECK(gaussian_qfi({{0, 0}, Sym2::identity()}, {}) == 0.0);
  CHECK(gaussian_qfi({{0, 0}, Sym2::identity()}, {{0.0, 1.0}, {0, 0, 0}}) == Approx(2.0));
  CHECK(gaussian_qfi({{0, 0}, Sym2::diag(2.0, 2.0)}, {{0.0, 1.0}, {0, 0, 0}}) == Approx(1.0));
  CHECK_THROWS_AS(gaussian_qfi({{0, 0}, Sym2{1.0, 1.0, 1.0}}, {}), ParameterError);
}

TEST_CASE("gaussian_qfi closed forms from the fidelity oracle") {
  // Displaced thermal state: Q = 2 / nu.
  oracle::Family disp{[](double w) { return Vec2{0.0, w}; },
                      [](double) { return Sym2::diag(2.0, 2.0); }};
  CHECK(oracle::fidelity_qfi(disp, 0.3, 1e-4) == Approx(1.0).epsilon(1e-4));
  // Thermal family nu(w) = nu0 e^w: Q = nu^2 / (nu^2 - 1) (Bures metric of a
  // thermal state in its log-temperature).
  const double nu = 3.0;
  oracle::Family therm{[](double) { return Vec2{}; },
                       [&](double w) { return Sym2::diag(nu * std::exp(w), nu * std::exp(w)); }};
  const double expected = nu * nu / (nu * nu - 1.0);
  CHECK(oracle::fidelity_qfi(therm, 0.0, 1e-4) == Approx(expected).epsilon(1e-4));
  CHECK(gaussian_qfi({{}, Sym2::diag(nu, nu)}, {{}, Sym2::diag(nu, nu)}) ==
        Approx(expected).epsilon(1e-12));
}

TEST_CASE("gaussian_qfi agrees with the fidelity oracle on random families") {
  std::mt19937_64 gen(41);
  for (int i = 0; i < 500; ++i) {
    const bool pure = i % 3 == 0;
    const auto f = random_family(gen, pure);
    const double w = 0.2;
    const double q = gaussian_qfi({f.r(w), f.sigma(w)}, f.tangent(w));
    oracle::Family fam{[&](double x) { return f.r(x); }, [&](double x) { return f.sigma(x); }};
    const double ref = oracle::fidelity_qfi(fam, w, 1e-4);
    CHECK(q == Approx(ref).epsilon(1e-2));
  }
}

TEST_CASE("purity-term guard is continuous") {
  // nu = 1 + eps: the dmu term scales like eps / 4 near purity.
  const auto q_at = [](double eps) {
    const double nu = 1.0 + eps;
    const Sym2 s = Sym2::diag(nu * 4.0, nu / 4.0);
    const Sym2 ds = Sym2::diag(eps * 4.0, eps / 4.0);
    return gaussian_qfi({{}, s}, {{0.3, 0.1}, ds});
  };
  const double eps_switch = 0.25 * kPureStateEpsilon;
  CHECK(std::abs(q_at(eps_switch * 1.01) - q_at(eps_switch * 0.99)) < 1e-6);
}

TEST_CASE("fhom_increment") {
  SystemParams p;
  CHECK(fhom_increment({{0.0, 5.0}, {}}, p) == 0.0);
  CHECK(fhom_increment({{1.0, 0.0}, {}}, p) == Approx(0.0018).epsilon(1e-12));
  p.eta = 0.0;
  CHECK(fhom_increment({{3.0, 1.0}, {}}, p) == 0.0);
}

TEST_CASE("reward increments telescope") {
  SystemParams p;
  auto t = reset(p, InitialCondition{{0.5, -0.5}, 5.0}, 3);
  const auto start = t;
  // First step: tangent is zero so only the QFI change contributes.
  auto t1 = t;
  step(t1, p, 0.0);
  CHECK(reward_increment(t, t1, p) ==
        Approx(gaussian_qfi(t1.state, t1.tangent) - gaussian_qfi(t.state, t.tangent)));
  double ret = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const auto before = t;
    step(t, p, 0.0);
    ret += reward_increment(before, t, p);
  }
  const double expected = t.fhom_integral + gaussian_qfi(t.state, t.tangent) -
                          gaussian_qfi(start.state, start.tangent);
  CHECK(std::abs(ret - expected) < 1e-10);
  // Stationary state, tangent and zero noise: nothing to gain.
  TrajectoryState s = reset(p, InitialCondition{}, 1);
  CHECK(reward_increment(s, s, p) == 0.0);
}

TEST_CASE("effective_qfi reductions") {
  const std::vector<double> times{0.0, 1.0, 2.0};
  std::vector<std::vector<FisherSample>> same(2, {{0.0, 0.0}, {1.0, 2.0}, {3.0, 5.0}});
  const auto r = effective_qfi(times, same);
  CHECK(r.n_traj == 2);
  CHECK(std::isnan(r.fhom_over_t[0]));
  CHECK(r.qbar_c[0] == 0.0);
  CHECK(r.fhom_over_t[1] == 1.0);
  CHECK(r.qbar_c[2] == 5.0);
  CHECK(r.qeff_over_t[2] == 4.0);
  CHECK(r.stderr_qeff[1] == 0.0);
  CHECK(r.stderr_qeff[2] == 0.0);

  CHECK_THROWS_AS(effective_qfi(times, {}), ParameterError);
  std::vector<std::vector<FisherSample>> ragged{{{0, 0}}};
  CHECK_THROWS_AS(effective_qfi(times, ragged), ParameterError);

  // Failed trajectories are excluded.
  std::vector<std::vector<FisherSample>> mixed{same[0], {{0, 0}, {100, 100}, {100, 100}}};
  const std::vector<char> failed{0, 1};
  const auto m = effective_qfi(times, mixed, failed);
  CHECK(m.n_traj == 1);
  CHECK(m.qbar_c[2] == 5.0);
  const std::vector<char> all_failed{1, 1};
  CHECK_THROWS_AS(effective_qfi(times, mixed, all_failed), ParameterError);
}

TEST_CASE("effective_qfi merges as a weighted mean") {
  std::mt19937_64 gen(2);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  const std::vector<double> times{0.5, 1.0};
  std::vector<std::vector<FisherSample>> a(7), b(13);
  for (auto* e : {&a, &b}) {
    for (auto& row : *e) row = {{u(gen), u(gen)}, {u(gen), u(gen)}};
  }
  auto ab = a;
  ab.insert(ab.end(), b.begin(), b.end());
  const auto ra = effective_qfi(times, a), rb = effective_qfi(times, b), rab = effective_qfi(times, ab);
  for (std::size_t i = 0; i < times.size(); ++i) {
    CHECK(rab.fhom_over_t[i] == Approx((7 * ra.fhom_over_t[i] + 13 * rb.fhom_over_t[i]) / 20));
    CHECK(rab.qbar_c[i] == Approx((7 * ra.qbar_c[i] + 13 * rb.qbar_c[i]) / 20));
    CHECK(rab.qeff_over_t[i] * times[i] ==
          Approx(rab.fhom_over_t[i] * times[i] + rab.qbar_c[i]).epsilon(1e-14));
    CHECK(rab.qeff_over_t[i] >= rab.fhom_over_t[i]);
    CHECK(rab.fhom_over_t[i] >= 0.0);
  }
}

TEST_CASE("single open-loop trajectory has no record information") {
  SystemParams p;
  OpenLoop ol;
  EnsembleSpec spec;
  spec.params = p;
  spec.init.fixed = {{0.0, 0.0}, 5.0};
  spec.n_traj = 1;
  spec.horizon_steps = 5000;
  spec.steps = record_steps(5000, 500);
  const auto rec = collect_ensemble(spec, ol);
  std::vector<std::vector<FisherSample>> samples(1);
  for (const auto& s : rec.records[0]) samples[0].push_back(fisher_sample(s));
  std::vector<double> times;
  for (auto s : spec.steps) times.push_back(s * p.dt);
  const auto r = effective_qfi(times, samples);
  for (std::size_t i = 1; i < times.size(); ++i) {
    CHECK(r.fhom_over_t[i] == 0.0);
    CHECK(r.qeff_over_t[i] * times[i] == Approx(r.qbar_c[i]).epsilon(1e-14));
  }
}

TEST_CASE("homodyne Fisher information matches the record likelihood") {
  // Score of log p(y | omega) from central differences on a shared record.
  SystemParams p;
  p.chi = 0.0;
  const double delta = 1e-4;
  const int n_traj = 1500, n_steps = 2000;
  std::vector<double> score2, fhom;
  for (int k = 0; k < n_traj; ++k) {
    auto c = reset(p, InitialCondition{{0.0, 0.0}, 5.0}, StreamKey{99, static_cast<std::uint32_t>(k)});
    SystemParams pp = p, pm = p;
    pp.omega += delta;
    pm.omega -= delta;
    auto up = c, dn = c;
    const double gain = std::sqrt(2.0 * p.eta * p.kappa) * p.dt;
    double lp = 0.0, lm = 0.0;
    for (int i = 0; i < n_steps; ++i) {
      const double mp = gain * up.state.r.q, mm = gain * dn.state.r.q;
      const auto r = step(c, p, 0.0);
      lp += -(r.dy - mp) * (r.dy - mp) / (2.0 * p.dt);
      lm += -(r.dy - mm) * (r.dy - mm) / (2.0 * p.dt);
      step_with_record(up, pp, 0.0, r.dy);
      step_with_record(dn, pm, 0.0, r.dy);
    }
    const double s = (lp - lm) / (2.0 * delta);
    score2.push_back(s * s);
    fhom.push_back(c.fhom_integral);
  }
  double ms = 0, mf = 0;
  for (int k = 0; k < n_traj; ++k) {
    ms += score2[k];
    mf += fhom[k];
  }
  ms /= n_traj;
  mf /= n_traj;
  double vd = 0;
  for (int k = 0; k < n_traj; ++k) vd += (score2[k] - fhom[k] - (ms - mf)) * (score2[k] - fhom[k] - (ms - mf));
  const double se = std::sqrt(vd / (n_traj - 1) / n_traj);
  CHECK(std::abs(ms - mf) < 4.0 * se);
  CHECK(std::abs(ms - mf) < 0.15 * mf);
}

TEST_CASE("qcrb_bound") {
  CHECK(qcrb_bound(100.0, 1.0) == Approx(0.1));
  for (double t : {0.1, 1.0, 37.0}) CHECK(qcrb_bound(4.0 * t, t) == Approx(0.5));
  CHECK(qcrb_bound(200.0, 1.0) == Approx(0.1 / std::sqrt(2.0)));
  CHECK_THROWS_AS(qcrb_bound(0.0, 1.0), ParameterError);
  CHECK_THROWS_AS(qcrb_bound(1.0, 0.0), ParameterError);
}

TEST_CASE("fisher csv layout") {
  FisherReport r;
  r.times = {0.0, 1.0};
  r.fhom_over_t = {NAN, 1.0};
  r.qbar_c = {0.0, 2.0};
  r.qeff_over_t = {NAN, 3.0};
  r.stderr_qeff = {NAN, 0.5};
  r.n_traj = 4;
  std::ostringstream os;
  write_fisher_csv(os, r);
  CHECK(os.str().rfind("t,fhom_over_t,qbar_c,qeff_over_t,stderr_qeff,n_traj\n", 0) == 0);
  CHECK(os.str().find("1.000000000000e+00,1.000000000000e+00,2.000000000000e+00,3.000000000000e+00,5.000000000000e-01,4") !=
        std::string::npos);
}

TEST_CASE("measurement covariance has unit determinant") {
  for (double th : {0.0, 0.3, 1.2, -2.0}) {
    for (double z : {1e-3, 0.3, 2.0}) {
      CHECK(StrongMeasurementSpec{th, z}.measurement_covariance().det() == Approx(1.0).epsilon(1e-9));
    }
    // At z = 1e-8 the determinant cancels catastrophically; check the invariants instead.
    const auto m = StrongMeasurementSpec{th, 1e-8}.measurement_covariance();
    CHECK(m.qq + m.pp == Approx(1e8 + 1e-8).epsilon(1e-14));
  }
}

TEST_CASE("final_homodyne_fi examples") {
  const GaussianState vac{{}, Sym2::identity()};
  const TangentState dp{{0.0, 1.0}, {}};
  const double z = 1e-8;
  CHECK(final_homodyne_fi(vac, dp, {pi / 2, z}) == Approx(2.0 / (1.0 + z)).epsilon(1e-12));
  CHECK(final_homodyne_fi(vac, {}, {0.7, z}) == 0.0);
  std::mt19937_64 gen(4);
  for (int i = 0; i < 100; ++i) {
    const auto f = random_family(gen, i % 2);
    const GaussianState s{f.r(0.0), f.sigma(0.0)};
    const auto tg = f.tangent(0.0);
    CHECK(final_homodyne_fi(s, tg, {0.0, z}) == Approx(final_homodyne_fi(s, tg, {pi, z})).epsilon(1e-9));
  }
}

TEST_CASE("optimize_final_homodyne") {
  const GaussianState vac{{}, Sym2::identity()};
  const TangentState dp{{0.0, 1.0}, {}};
  const auto best = optimize_final_homodyne(vac, dp);
  CHECK(std::abs(std::remainder(best.theta - pi / 2, pi)) < 1e-5);
  CHECK(best.fi == Approx(2.0).epsilon(1e-6));
  CHECK(best.fi <= gaussian_qfi(vac, dp) + 1e-9);

  // Rotating the problem shifts the optimum by the same angle.
  const Sym2 sq = Sym2::diag(0.3, 4.0);
  const TangentState tg{{0.4, 1.0}, {0.1, 0.05, -0.2}};
  const auto base = optimize_final_homodyne({{1.0, 0.0}, sq}, tg);
  for (double phi : {0.4, 1.3, -0.9}) {
    const Mat2 rot = Mat2::rotation(std::cos(phi), std::sin(phi));
    const auto rotated = optimize_final_homodyne({rot * Vec2{1.0, 0.0}, congruence(rot, sq)},
                                                 {rot * tg.dr, congruence(rot, tg.dsigma)});
    CHECK(std::abs(std::remainder(rotated.theta - base.theta - phi, pi)) < 1e-4);
    CHECK(rotated.fi == Approx(base.fi).epsilon(1e-8));
  }
  // Pure q-squeezed state with p-displacement tangent.
  const GaussianState pure{{}, Sym2::diag(0.1, 10.0)};
  const TangentState tp{{0.0, 1.0}, {}};
  CHECK(optimize_final_homodyne(pure, tp).fi / gaussian_qfi(pure, tp) <= 1.0 + 1e-9);
}

TEST_CASE("final homodyne never beats the QFI") {
  std::mt19937_64 gen(77);
  std::uniform_real_distribution<double> u(-pi, pi);
  std::uniform_real_distribution<double> lz(-9.0, 1.0);
  for (int i = 0; i < 2000; ++i) {
    const auto f = random_family(gen, i % 4 == 0);
    const GaussianState s{f.r(0.0), f.sigma(0.0)};
    const auto tg = f.tangent(0.0);
    const double q = gaussian_qfi(s, tg);
    const double fi = final_homodyne_fi(s, tg, {u(gen), std::pow(10.0, lz(gen))});
    CHECK(fi <= q * (1.0 + 1e-9));
  }
}
