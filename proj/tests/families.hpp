#pragma once

#include <cmath>
#include <numbers>
#include <random>

#include "qmetro/linalg.hpp"
#include "qmetro/gaussian.hpp"
#include "qmetro/trajectory.hpp"

namespace testfam {

using qmetro::Mat2;
using qmetro::Sym2;
using qmetro::TangentState;
using qmetro::Vec2;

// Random one-parameter Gaussian family and its derivative in w.
struct RandomFamily {
  double nu0, nu1, s0, s1, phi0, phi1;
  Vec2 r0, r1;

  Sym2 sigma(double w) const {
    const double nu = nu0 * std::exp(nu1 * w);
    const double s = s0 + s1 * w;
    const double phi = phi0 + phi1 * w;
    return congruence(Mat2::rotation(std::cos(phi), std::sin(phi)),
                      Sym2::diag(nu * std::exp(2.0 * s), nu * std::exp(-2.0 * s)));
  }
  Vec2 r(double w) const { return r0 + w * r1; }

  TangentState tangent(double w, double h = 1e-6) const {
    // Five-point stencil; the family is smooth and analytic in w.
    auto d = [&](auto f) {
      return (-f(w + 2 * h) + 8.0 * f(w + h) - 8.0 * f(w - h) + f(w - 2 * h)) / (12.0 * h);
    };
    TangentState t;
    t.dr = r1;
    t.dsigma = {d([&](double x) { return sigma(x).qq; }), d([&](double x) { return sigma(x).qp; }),
                d([&](double x) { return sigma(x).pp; })};
    return t;
  }
};

inline RandomFamily random_family(std::mt19937_64& gen, bool pure) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  RandomFamily f;
  f.nu0 = pure ? 1.0 : 1.25 + 2.0 * std::abs(u(gen));
  f.nu1 = pure ? 0.0 : u(gen);
  f.s0 = 0.8 * u(gen);
  f.s1 = u(gen);
  f.phi0 = std::numbers::pi * u(gen);
  f.phi1 = u(gen);
  f.r0 = {2.0 * u(gen), 2.0 * u(gen)};
  f.r1 = {u(gen), u(gen)};
  return f;
}


}  // namespace testfam
