#include "qmetro/rng.hpp"

namespace qmetro {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t prod = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(prod >> 32);
  lo = static_cast<std::uint32_t>(prod);
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                           std::array<std::uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += kPhiloxW0;
      key[1] += kPhiloxW1;
    }
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kPhiloxM0, ctr[0], hi0, lo0);
    mulhilo(kPhiloxM1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
  }
  return ctr;
}

void PhiloxEngine::refill() {
  // counter = (block lo, block hi, trajectory index, purpose); key = seed.
  const std::array<std::uint32_t, 4> ctr{
      static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
      key_.index, static_cast<std::uint32_t>(key_.purpose)};
  const std::array<std::uint32_t, 2> k{static_cast<std::uint32_t>(key_.seed),
                                       static_cast<std::uint32_t>(key_.seed >> 32)};
  buffer_ = philox4x32_10(ctr, k);
  ++block_;
  used_ = 0;
}

PhiloxEngine::result_type PhiloxEngine::operator()() {
  if (used_ >= 2) refill();
  const std::uint64_t lo = buffer_[2 * used_];
  const std::uint64_t hi = buffer_[2 * used_ + 1];
  ++used_;
  return (hi << 32) | lo;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace qmetro
