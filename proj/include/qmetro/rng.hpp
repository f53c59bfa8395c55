#pragma once

// Counter-based random streams. Every trajectory owns a stream keyed by
// (base seed, trajectory index, stream purpose), so results never depend on
// which worker ran which trajectory.

#include <array>
#include <cstdint>
#include <limits>
#include <random>

namespace qmetro {

/// Philox4x32 with 10 rounds (Salmon et al.'s counter-based generator).
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter,
                                           std::array<std::uint32_t, 2> key);

enum class StreamPurpose : std::uint32_t {
  measurement_noise = 0,
  initial_condition = 1,
  policy_noise = 2,
};

struct StreamKey {
  std::uint64_t seed = 0;
  std::uint32_t index = 0;
  StreamPurpose purpose = StreamPurpose::measurement_noise;

  friend bool operator==(const StreamKey&, const StreamKey&) = default;
};

/// Uniform random bit generator over a Philox counter sequence.
class PhiloxEngine {
 public:
  using result_type = std::uint64_t;

  PhiloxEngine() = default;
  explicit PhiloxEngine(StreamKey key) : key_(key) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()();

  const StreamKey& key() const { return key_; }
  std::uint64_t blocks_consumed() const { return block_; }

  friend bool operator==(const PhiloxEngine&, const PhiloxEngine&) = default;

 private:
  void refill();

  StreamKey key_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int used_ = 2;  // 64-bit words consumed from buffer_
};

/// Standard-normal source bound to one counter stream.
class RngStream {
 public:
  RngStream() = default;
  explicit RngStream(StreamKey key) : engine_(key) {}

  double normal() { return normal_(engine_); }
  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }

  const StreamKey& key() const { return engine_.key(); }

  friend bool operator==(const RngStream& a, const RngStream& b) {
    return a.engine_ == b.engine_ && a.normal_ == b.normal_;
  }

 private:
  PhiloxEngine engine_;
  std::normal_distribution<double> normal_;
};

/// SplitMix64 finalizer; used to derive follow-up episode seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

}  // namespace qmetro
