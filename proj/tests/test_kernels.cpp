#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "oracles.hpp"
#include "qmetro/kernels.hpp"
#include "qmetro/simd.hpp"
#include "qmetro/trajectory.hpp"

using namespace qmetro;
using kernels::kLanes;
using kernels::LaneBlock;

namespace {

LaneBlock random_block(std::mt19937_64& gen) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  LaneBlock b{};
  for (std::size_t l = 0; l < kLanes; ++l) {
    const double a = 1.0 + 3.0 * std::abs(u(gen));
    const double c = 1.0 + 3.0 * std::abs(u(gen));
    b.r_q[l] = 3.0 * u(gen);
    b.r_p[l] = 3.0 * u(gen);
    b.s_qq[l] = a;
    b.s_qp[l] = 0.5 * u(gen);
    b.s_pp[l] = c;
    b.dr_q[l] = u(gen);
    b.dr_p[l] = u(gen);
    b.ds_qq[l] = u(gen);
    b.ds_qp[l] = u(gen);
    b.ds_pp[l] = u(gen);
    b.fhom[l] = std::abs(u(gen));
  }
  return b;
}

bool same_bits(const LaneBlock& a, const LaneBlock& b) { return std::memcmp(&a, &b, sizeof a) == 0; }

}  // namespace

TEST_CASE("scalar step matches the matrix-form Euler oracle") {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    SystemParams p;
    p.omega = u(gen);
    p.chi = 0.49 * std::abs(u(gen));
    p.eta = std::abs(u(gen));
    p.dt = 1e-2;
    LaneBlock b = random_block(gen);
    const double fb[kLanes] = {u(gen), u(gen), u(gen), u(gen)};
    const double dw[kLanes] = {0.1 * u(gen), 0.1 * u(gen), 0.1 * u(gen), 0.1 * u(gen)};
    const LaneBlock before = b;
    double dy[kLanes];
    kernels::step_lanes_scalar(kernels::StepCoefficients::from(p), b, fb, dw, dy, kLanes);
    for (std::size_t l = 0; l < kLanes; ++l) {
      oracle::Moments x{{before.r_q[l], before.r_p[l]},
                        {before.dr_q[l], before.dr_p[l]},
                        {before.s_qq[l], before.s_qp[l], before.s_pp[l]},
                        {before.ds_qq[l], before.ds_qp[l], before.ds_pp[l]}};
      const auto y = oracle::euler_step(p, p.omega + fb[l], x, dw[l]);
      const double tol = 1e-13;
      CHECK(b.r_q[l] == doctest::Approx(y.r.q).epsilon(tol).scale(1.0));
      CHECK(b.r_p[l] == doctest::Approx(y.r.p).epsilon(tol).scale(1.0));
      CHECK(b.dr_q[l] == doctest::Approx(y.dr.q).epsilon(tol).scale(1.0));
      CHECK(b.dr_p[l] == doctest::Approx(y.dr.p).epsilon(tol).scale(1.0));
      CHECK(b.s_qq[l] == doctest::Approx(y.s.qq).epsilon(tol).scale(1.0));
      CHECK(b.s_qp[l] == doctest::Approx(y.s.qp).epsilon(tol).scale(1.0));
      CHECK(b.s_pp[l] == doctest::Approx(y.s.pp).epsilon(tol).scale(1.0));
      CHECK(b.ds_qq[l] == doctest::Approx(y.ds.qq).epsilon(tol).scale(1.0));
      CHECK(b.ds_qp[l] == doctest::Approx(y.ds.qp).epsilon(tol).scale(1.0));
      CHECK(b.ds_pp[l] == doctest::Approx(y.ds.pp).epsilon(tol).scale(1.0));
      // Photocurrent and Fisher increment use the pre-update moments.
      CHECK(dy[l] == doctest::Approx(std::sqrt(2.0 * p.eta) * before.r_q[l] * p.dt + dw[l]).epsilon(1e-14));
      CHECK(b.fhom[l] ==
            doctest::Approx(before.fhom[l] + 2.0 * p.dt * p.eta * before.dr_q[l] * before.dr_q[l]).epsilon(1e-15));
    }
  }
}

TEST_CASE("avx2 step is bit-identical to the scalar step") {
  if (!simd::isa_available(simd::Isa::avx2)) {
    MESSAGE("avx2 not available on this machine; skipped");
    return;
  }
  std::mt19937_64 gen(17);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 2000; ++trial) {
    SystemParams p;
    p.omega = u(gen);
    p.chi = 0.49 * std::abs(u(gen));
    p.eta = std::abs(u(gen));
    p.dt = trial % 2 ? 1e-3 : 1e-2;
    const auto c = kernels::StepCoefficients::from(p);
    LaneBlock a = random_block(gen);
    LaneBlock b = a;
    for (int s = 0; s < 20; ++s) {
      const double fb[kLanes] = {u(gen), u(gen), u(gen), u(gen)};
      const double dw[kLanes] = {0.03 * u(gen), 0.03 * u(gen), 0.03 * u(gen), 0.03 * u(gen)};
      double dya[kLanes], dyb[kLanes];
      kernels::step_lanes_scalar(c, a, fb, dw, dya, kLanes);
      kernels::step_lanes_avx2(c, b, fb, dw, dyb);
      REQUIRE(std::memcmp(dya, dyb, sizeof dya) == 0);
    }
    REQUIRE(same_bits(a, b));
  }
}

TEST_CASE("dispatch honours the isa override") {
  simd::set_isa_override(simd::Isa::scalar);
  CHECK(simd::active_isa() == simd::Isa::scalar);
  if (simd::isa_available(simd::Isa::avx2)) {
    simd::set_isa_override(simd::Isa::avx2);
    CHECK(simd::active_isa() == simd::Isa::avx2);
  }
  simd::set_isa_override(std::nullopt);
  CHECK(simd::active_isa() == simd::detected_isa());
  CHECK(simd::parse_isa("scalar") == simd::Isa::scalar);
  CHECK(simd::parse_isa("avx2") == simd::Isa::avx2);
  CHECK_FALSE(simd::parse_isa("neon").has_value());
  CHECK(std::string(simd::isa_name(simd::Isa::avx2)) == "avx2");
}

TEST_CASE("dispatched step gives the same bits under both isas") {
  std::mt19937_64 gen(23);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  SystemParams p;
  const auto c = kernels::StepCoefficients::from(p);
  const LaneBlock start = random_block(gen);
  LaneBlock results[2];
  int i = 0;
  for (auto isa : {simd::Isa::scalar, simd::Isa::avx2}) {
    if (!simd::isa_available(isa)) continue;
    simd::set_isa_override(isa);
    std::mt19937_64 g2(99);
    LaneBlock b = start;
    for (int s = 0; s < 1000; ++s) {
      const double fb[kLanes] = {u(g2), u(g2), u(g2), u(g2)};
      const double dw[kLanes] = {0.03 * u(g2), 0.03 * u(g2), 0.03 * u(g2), 0.03 * u(g2)};
      double dy[kLanes];
      kernels::step_lanes(c, b, fb, dw, dy, kLanes);
    }
    results[i++] = b;
  }
  simd::set_isa_override(std::nullopt);
  if (i == 2) CHECK(same_bits(results[0], results[1]));
}

TEST_CASE("mlp kernels agree bitwise and match a naive forward pass") {
  std::mt19937_64 gen(29);
  std::normal_distribution<double> nd(0.0, 0.3);
  const std::size_t sizes[] = {11, 64, 64, 1};
  std::vector<std::vector<double>> w(3), bias(3);
  std::vector<kernels::DenseView> layers;
  for (int k = 0; k < 3; ++k) {
    w[k].resize(sizes[k + 1] * sizes[k]);
    bias[k].resize(sizes[k + 1]);
    for (auto& x : w[k]) x = nd(gen);
    for (auto& x : bias[k]) x = nd(gen);
    layers.push_back({sizes[k], sizes[k + 1], w[k].data(), bias[k].data()});
  }
  for (auto act : {kernels::Activation::tanh, kernels::Activation::relu, kernels::Activation::identity}) {
    for (int trial = 0; trial < 50; ++trial) {
      alignas(32) double input[11 * kLanes];
      for (auto& x : input) x = 3.0 * nd(gen);
      std::vector<double> scratch(2 * 64 * kLanes);
      double out_s[kLanes], out_v[kLanes];
      kernels::mlp_lanes_scalar(layers, act, input, scratch.data(), out_s, kLanes);
      if (simd::isa_available(simd::Isa::avx2)) {
        kernels::mlp_lanes_avx2(layers, act, input, scratch.data(), out_v);
        REQUIRE(std::memcmp(out_s, out_v, sizeof out_s) == 0);
      }
      for (std::size_t l = 0; l < kLanes; ++l) {
        std::vector<double> x(11);
        for (int i = 0; i < 11; ++i) x[i] = input[i * kLanes + l];
        for (int k = 0; k < 3; ++k) {
          std::vector<double> y(sizes[k + 1]);
          for (std::size_t o = 0; o < sizes[k + 1]; ++o) {
            double s = bias[k][o];
            for (std::size_t i = 0; i < sizes[k]; ++i) s += w[k][o * sizes[k] + i] * x[i];
            if (k < 2) {
              s = act == kernels::Activation::tanh ? std::tanh(s)
                  : act == kernels::Activation::relu ? std::max(0.0, s)
                                                     : s;
            }
            y[o] = s;
          }
          x = y;
        }
        CHECK(out_s[l] == doctest::Approx(x[0]).epsilon(1e-12).scale(1.0));
      }
    }
  }
}
