// Scalar reference kernels. The vector variants in lanes_avx2.cpp mirror
// every expression here operation for operation; keep them in sync.

#include <algorithm>
#include <cmath>

#include "qmetro/kernels.hpp"

namespace qmetro::kernels {

StepCoefficients StepCoefficients::from(const SystemParams& params) {
  StepCoefficients c;
  c.omega = params.omega;
  c.a11 = -(params.chi + 0.5 * params.kappa);
  c.a22 = params.chi - 0.5 * params.kappa;
  c.neg_b = std::sqrt(params.eta * params.kappa);
  c.b = -c.neg_b;
  c.kappa = params.kappa;
  c.dt = params.dt;
  c.inv_sqrt2 = 1.0 / std::sqrt(2.0);
  c.dy_gain = -std::sqrt(2.0) * c.b * params.dt;
  c.fhom_gain = 2.0 * params.dt * params.eta * params.kappa;
  return c;
}

void step_lanes_scalar(const StepCoefficients& c, LaneBlock& k, const double* omega_fb,
                       const double* dw, double* dy, std::size_t n) {
  const double dt = c.dt;
  for (std::size_t l = 0; l < n; ++l) {
    const double w = c.omega + omega_fb[l];
    const double rq = k.r_q[l], rp = k.r_p[l];
    const double sqq = k.s_qq[l], sqp = k.s_qp[l], spp = k.s_pp[l];
    const double drq = k.dr_q[l], drp = k.dr_p[l];
    const double dqq = k.ds_qq[l], dqp = k.ds_qp[l], dpp = k.ds_pp[l];

    // Nonzero column of E - sigma B.
    const double g1 = c.b * (1.0 - sqq);
    const double g2 = c.neg_b * sqp;
    // Nonzero column of (d sigma) B.
    const double v1 = c.b * dqq;
    const double v2 = c.b * dqp;
    const double ns = dw[l] * c.inv_sqrt2;

    dy[l] = c.dy_gain * rq + dw[l];
    k.fhom[l] = k.fhom[l] + c.fhom_gain * (drq * drq);

    k.r_q[l] = rq + (c.a11 * rq + w * rp) * dt + g1 * ns;
    k.r_p[l] = rp + (c.a22 * rp - w * rq) * dt + g2 * ns;

    k.dr_q[l] = drq + (rp + c.a11 * drq + w * drp + (g1 * c.b) * drq) * dt - v1 * ns;
    k.dr_p[l] = drp + (c.a22 * drp - rq - w * drq + (g2 * c.b) * drq) * dt - v2 * ns;

    const double fqq = 2.0 * (c.a11 * sqq + w * sqp) + c.kappa - g1 * g1;
    const double fqp = c.a11 * sqp + w * spp - w * sqq + c.a22 * sqp - g1 * g2;
    const double fpp = 2.0 * (c.a22 * spp - w * sqp) + c.kappa - g2 * g2;
    k.s_qq[l] = sqq + dt * fqq;
    k.s_qp[l] = sqp + dt * fqp;
    k.s_pp[l] = spp + dt * fpp;

    const double hqq = 2.0 * sqp + 2.0 * (c.a11 * dqq + w * dqp) + 2.0 * (v1 * g1);
    const double hqp = (spp - sqq) + (c.a11 * dqp + w * dpp - w * dqq + c.a22 * dqp) +
                       (v1 * g2 + v2 * g1);
    const double hpp = 2.0 * (c.a22 * dpp - w * dqp) - 2.0 * sqp + 2.0 * (v2 * g2);
    k.ds_qq[l] = dqq + dt * hqq;
    k.ds_qp[l] = dqp + dt * hqp;
    k.ds_pp[l] = dpp + dt * hpp;
  }
}

namespace {

inline double activate(Activation act, double x) {
  switch (act) {
    case Activation::tanh:
      return std::tanh(x);
    case Activation::relu:
      return x > 0.0 ? x : 0.0;
    case Activation::identity:
      break;
  }
  return x;
}

}  // namespace

void mlp_lanes_scalar(std::span<const DenseView> layers, Activation act, const double* input,
                      double* scratch, double* output, std::size_t n) {
  std::size_t max_width = 0;
  for (const auto& layer : layers) max_width = std::max(max_width, layer.out);
  const double* x = input;
  double* bufs[2] = {scratch, scratch + max_width * kLanes};
  int which = 0;
  for (std::size_t li = 0; li < layers.size(); ++li) {
    const DenseView& layer = layers[li];
    const bool last = li + 1 == layers.size();
    double* y = bufs[which];
    for (std::size_t j = 0; j < layer.out; ++j) {
      const double* row = layer.weights + j * layer.in;
      for (std::size_t l = 0; l < n; ++l) {
        double acc = layer.bias[j];
        for (std::size_t i = 0; i < layer.in; ++i) acc = acc + row[i] * x[i * kLanes + l];
        y[j * kLanes + l] = last ? acc : activate(act, acc);
      }
    }
    x = y;
    which ^= 1;
  }
  for (std::size_t l = 0; l < n; ++l) output[l] = x[l];
}

}  // namespace qmetro::kernels
