#pragma once

// Feedback policies: map the current observation to the feedback frequency
// omega_fb added to omega in the drift.

#include <array>
#include <memory>
#include <optional>
#include <span>
#include <string>

#include "qmetro/gaussian.hpp"
#include "qmetro/rng.hpp"
#include "qmetro/trajectory.hpp"
#include "qmetro/weights.hpp"

namespace qmetro {

inline constexpr int kObservationLayoutVersion = 1;
inline constexpr std::size_t kObservationSize = 11;

/// r_q, r_p, s_qq, s_qp, s_pp, dr_q, dr_p, ds_qq, ds_qp, ds_pp, dy.
struct Observation {
  std::array<double, kObservationSize> values{};

  static Observation of(const TrajectoryState& traj);
  double operator[](std::size_t i) const { return values[i]; }
};

class PolicyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Policy {
 public:
  virtual ~Policy() = default;

  virtual std::string name() const = 0;

  /// Feedback for one observation. `noise` is the trajectory's policy stream.
  virtual double act(const Observation& obs, const SystemParams& params,
                     RngStream& noise) const = 0;

  /// Batched form over up to kernels::kLanes observations. Must equal calling
  /// act() lane by lane. Implementations report a failing lane by writing a
  /// non-finite action instead of throwing.
  virtual void act_lanes(std::span<const Observation> obs, const SystemParams& params,
                         std::span<RngStream> noise, std::span<double> out) const;
};

/// omega_fb = 0.
class NoControl final : public Policy {
 public:
  std::string name() const override { return "none"; }
  double act(const Observation&, const SystemParams&, RngStream&) const override { return 0.0; }
};

/// omega_fb = -omega: cancels the rotation, independent of the record.
class OpenLoop final : public Policy {
 public:
  std::string name() const override { return "open_loop"; }
  double act(const Observation&, const SystemParams& params, RngStream&) const override {
    return -params.omega;
  }
};

struct NeuralOptions {
  bool deterministic = true;
  /// Symmetric clip |omega_fb| <= bound when set.
  std::optional<double> action_bound;
};

/// Actor-mean forward pass; stochastic mode adds exp(log_std) * N(0,1) drawn
/// from `noise`. Throws PolicyError on a non-finite result.
double neural_act(const NeuralWeights& weights, const Observation& obs, bool deterministic,
                  RngStream* noise);

class NeuralPolicy final : public Policy {
 public:
  NeuralPolicy(std::shared_ptr<const NeuralWeights> weights, NeuralOptions options = {});

  std::string name() const override { return "neural"; }
  double act(const Observation& obs, const SystemParams& params,
             RngStream& noise) const override;
  void act_lanes(std::span<const Observation> obs, const SystemParams& params,
                 std::span<RngStream> noise, std::span<double> out) const override;

  const NeuralWeights& weights() const { return *weights_; }
  const NeuralOptions& options() const { return options_; }

 private:
  std::shared_ptr<const NeuralWeights> weights_;
  NeuralOptions options_;
};

}  // namespace qmetro
