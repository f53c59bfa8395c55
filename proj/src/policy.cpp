#include "qmetro/policy.hpp"

#include <algorithm>
#include <cmath>

namespace qmetro {

Observation Observation::of(const TrajectoryState& traj) {
  const auto& s = traj.state;
  const auto& g = traj.tangent;
  return {{s.r.q, s.r.p, s.sigma.qq, s.sigma.qp, s.sigma.pp, g.dr.q, g.dr.p, g.dsigma.qq,
           g.dsigma.qp, g.dsigma.pp, traj.last_dy}};
}

void Policy::act_lanes(std::span<const Observation> obs, const SystemParams& params,
                       std::span<RngStream> noise, std::span<double> out) const {
  for (std::size_t l = 0; l < obs.size(); ++l) {
    try {
      out[l] = act(obs[l], params, noise[l]);
    } catch (const std::exception&) {
      out[l] = std::numeric_limits<double>::quiet_NaN();
    }
  }
}

namespace {

constexpr std::size_t kLanes = kernels::kLanes;

// Writes the (optionally normalized) observation of lane l into the
// lane-interleaved input buffer.
void pack_input(const NeuralWeights& w, const Observation& obs, std::size_t l, double* input) {
  const std::size_t n_in = w.sizes[0];
  for (std::size_t i = 0; i < n_in; ++i) {
    double x = obs.values[i];
    if (w.normalization) {
      const auto& n = *w.normalization;
      x = (x - n.offset[i]) / n.scale[i];
      if (n.clip > 0.0) x = std::clamp(x, -n.clip, n.clip);
    }
    input[i * kLanes + l] = x;
  }
}

double finish_action(const NeuralWeights& w, double mean, bool deterministic, RngStream* noise,
                     const std::optional<double>& bound) {
  double a = mean;
  if (!deterministic) {
    if (!w.log_std) throw PolicyError("stochastic action requested but weights carry no log_std");
    if (noise == nullptr) throw PolicyError("stochastic action requested without a noise stream");
    a = mean + std::exp(*w.log_std) * noise->normal();
  }
  if (bound) a = std::clamp(a, -*bound, *bound);
  return a;
}

}  // namespace

double neural_act(const NeuralWeights& w, const Observation& obs, bool deterministic,
                  RngStream* noise) {
  if (w.sizes.empty() || w.sizes[0] != kObservationSize) {
    throw PolicyError("network input width does not match the observation size");
  }
  const auto layers = w.layer_views();
  std::vector<double> input(w.sizes[0] * kLanes, 0.0);
  std::vector<double> scratch(2 * w.max_width() * kLanes, 0.0);
  pack_input(w, obs, 0, input.data());
  double out = 0.0;
  kernels::mlp_lanes_scalar(layers, w.activation, input.data(), scratch.data(), &out, 1);
  const double a = finish_action(w, out, deterministic, noise, std::nullopt);
  if (!std::isfinite(a)) throw PolicyError("network produced a non-finite action");
  return a;
}

NeuralPolicy::NeuralPolicy(std::shared_ptr<const NeuralWeights> weights, NeuralOptions options)
    : weights_(std::move(weights)), options_(options) {
  if (!weights_) throw PolicyError("null weights");
  weights_->validate();
  if (weights_->sizes[0] != kObservationSize) {
    throw PolicyError("network input width " + std::to_string(weights_->sizes[0]) +
                      " does not match the observation size " +
                      std::to_string(kObservationSize));
  }
  if (weights_->obs_layout != kObservationLayoutVersion) {
    throw PolicyError("weights were trained on observation layout v" +
                      std::to_string(weights_->obs_layout));
  }
  if (!options_.deterministic && !weights_->log_std) {
    throw PolicyError("stochastic evaluation needs log_std in the weight file");
  }
}

double NeuralPolicy::act(const Observation& obs, const SystemParams&, RngStream& noise) const {
  const double a = neural_act(*weights_, obs, options_.deterministic, &noise);
  return options_.action_bound ? std::clamp(a, -*options_.action_bound, *options_.action_bound)
                               : a;
}

void NeuralPolicy::act_lanes(std::span<const Observation> obs, const SystemParams&,
                             std::span<RngStream> noise, std::span<double> out) const {
  const auto& w = *weights_;
  const auto layers = w.layer_views();
  const std::size_t n = obs.size();
  alignas(32) double input[kObservationSize * kLanes] = {};
  thread_local std::vector<double> scratch;
  scratch.assign(2 * w.max_width() * kLanes, 0.0);
  for (std::size_t l = 0; l < n; ++l) pack_input(w, obs[l], l, input);
  // Padding lanes repeat lane 0 so the vector kernel sees finite inputs.
  for (std::size_t l = n; l < kLanes; ++l) {
    for (std::size_t i = 0; i < kObservationSize; ++i) input[i * kLanes + l] = input[i * kLanes];
  }
  double means[kLanes];
  kernels::mlp_lanes(layers, w.activation, input, scratch.data(), means, n);
  for (std::size_t l = 0; l < n; ++l) {
    const double a = finish_action(w, means[l], options_.deterministic, &noise[l],
                                   options_.action_bound);
    out[l] = std::isfinite(a) ? a : std::numeric_limits<double>::quiet_NaN();
  }
}

}  // namespace qmetro
