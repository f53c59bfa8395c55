// AVX2 lane kernels. Compiled with -mavx2 only (no -mfma) so products and
// sums round exactly like the scalar reference.

#include <immintrin.h>

#include <algorithm>
#include <cmath>

#include "qmetro/kernels.hpp"

namespace qmetro::kernels {

namespace {

inline __m256d bc(double x) { return _mm256_set1_pd(x); }
inline __m256d add(__m256d a, __m256d b) { return _mm256_add_pd(a, b); }
inline __m256d sub(__m256d a, __m256d b) { return _mm256_sub_pd(a, b); }
inline __m256d mul(__m256d a, __m256d b) { return _mm256_mul_pd(a, b); }

}  // namespace

void step_lanes_avx2(const StepCoefficients& c, LaneBlock& k, const double* omega_fb,
                     const double* dw_in, double* dy_out) {
  const __m256d dt = bc(c.dt);
  const __m256d a11 = bc(c.a11);
  const __m256d a22 = bc(c.a22);
  const __m256d b = bc(c.b);
  const __m256d neg_b = bc(c.neg_b);
  const __m256d kappa = bc(c.kappa);
  const __m256d one = bc(1.0);
  const __m256d two = bc(2.0);

  const __m256d w = add(bc(c.omega), _mm256_loadu_pd(omega_fb));
  const __m256d dw = _mm256_loadu_pd(dw_in);
  const __m256d rq = _mm256_load_pd(k.r_q), rp = _mm256_load_pd(k.r_p);
  const __m256d sqq = _mm256_load_pd(k.s_qq), sqp = _mm256_load_pd(k.s_qp),
                spp = _mm256_load_pd(k.s_pp);
  const __m256d drq = _mm256_load_pd(k.dr_q), drp = _mm256_load_pd(k.dr_p);
  const __m256d dqq = _mm256_load_pd(k.ds_qq), dqp = _mm256_load_pd(k.ds_qp),
                dpp = _mm256_load_pd(k.ds_pp);

  const __m256d g1 = mul(b, sub(one, sqq));
  const __m256d g2 = mul(neg_b, sqp);
  const __m256d v1 = mul(b, dqq);
  const __m256d v2 = mul(b, dqp);
  const __m256d ns = mul(dw, bc(c.inv_sqrt2));

  _mm256_storeu_pd(dy_out, add(mul(bc(c.dy_gain), rq), dw));
  _mm256_store_pd(k.fhom, add(_mm256_load_pd(k.fhom), mul(bc(c.fhom_gain), mul(drq, drq))));

  // r_q + (a11 rq + w rp) dt + g1 ns
  _mm256_store_pd(k.r_q, add(add(rq, mul(add(mul(a11, rq), mul(w, rp)), dt)), mul(g1, ns)));
  // r_p + (a22 rp - w rq) dt + g2 ns
  _mm256_store_pd(k.r_p, add(add(rp, mul(sub(mul(a22, rp), mul(w, rq)), dt)), mul(g2, ns)));

  // drq + (rp + a11 drq + w drp + (g1 b) drq) dt - v1 ns
  {
    __m256d inner = add(rp, mul(a11, drq));
    inner = add(inner, mul(w, drp));
    inner = add(inner, mul(mul(g1, b), drq));
    _mm256_store_pd(k.dr_q, sub(add(drq, mul(inner, dt)), mul(v1, ns)));
  }
  // drp + (a22 drp - rq - w drq + (g2 b) drq) dt - v2 ns
  {
    __m256d inner = sub(mul(a22, drp), rq);
    inner = sub(inner, mul(w, drq));
    inner = add(inner, mul(mul(g2, b), drq));
    _mm256_store_pd(k.dr_p, sub(add(drp, mul(inner, dt)), mul(v2, ns)));
  }

  {
    // 2 (a11 sqq + w sqp) + kappa - g1 g1
    const __m256d fqq =
        sub(add(mul(two, add(mul(a11, sqq), mul(w, sqp))), kappa), mul(g1, g1));
    // a11 sqp + w spp - w sqq + a22 sqp - g1 g2
    __m256d fqp = add(mul(a11, sqp), mul(w, spp));
    fqp = sub(fqp, mul(w, sqq));
    fqp = add(fqp, mul(a22, sqp));
    fqp = sub(fqp, mul(g1, g2));
    // 2 (a22 spp - w sqp) + kappa - g2 g2
    const __m256d fpp =
        sub(add(mul(two, sub(mul(a22, spp), mul(w, sqp))), kappa), mul(g2, g2));
    _mm256_store_pd(k.s_qq, add(sqq, mul(dt, fqq)));
    _mm256_store_pd(k.s_qp, add(sqp, mul(dt, fqp)));
    _mm256_store_pd(k.s_pp, add(spp, mul(dt, fpp)));
  }

  {
    // 2 sqp + 2 (a11 dqq + w dqp) + 2 (v1 g1)
    const __m256d hqq = add(add(mul(two, sqp), mul(two, add(mul(a11, dqq), mul(w, dqp)))),
                            mul(two, mul(v1, g1)));
    // (spp - sqq) + (a11 dqp + w dpp - w dqq + a22 dqp) + (v1 g2 + v2 g1)
    __m256d mid = add(mul(a11, dqp), mul(w, dpp));
    mid = sub(mid, mul(w, dqq));
    mid = add(mid, mul(a22, dqp));
    const __m256d hqp = add(add(sub(spp, sqq), mid), add(mul(v1, g2), mul(v2, g1)));
    // 2 (a22 dpp - w dqp) - 2 sqp + 2 (v2 g2)
    const __m256d hpp = add(sub(mul(two, sub(mul(a22, dpp), mul(w, dqp))), mul(two, sqp)),
                            mul(two, mul(v2, g2)));
    _mm256_store_pd(k.ds_qq, add(dqq, mul(dt, hqq)));
    _mm256_store_pd(k.ds_qp, add(dqp, mul(dt, hqp)));
    _mm256_store_pd(k.ds_pp, add(dpp, mul(dt, hpp)));
  }
}

void mlp_lanes_avx2(std::span<const DenseView> layers, Activation act, const double* input,
                    double* scratch, double* output) {
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
      __m256d acc = bc(layer.bias[j]);
      for (std::size_t i = 0; i < layer.in; ++i) {
        acc = add(acc, mul(bc(row[i]), _mm256_loadu_pd(x + i * kLanes)));
      }
      double* dst = y + j * kLanes;
      _mm256_storeu_pd(dst, acc);
      if (!last) {
        switch (act) {
          case Activation::tanh:
            for (std::size_t l = 0; l < kLanes; ++l) dst[l] = std::tanh(dst[l]);
            break;
          case Activation::relu:
            _mm256_storeu_pd(dst, _mm256_max_pd(acc, _mm256_setzero_pd()));
            break;
          case Activation::identity:
            break;
        }
      }
    }
    x = y;
    which ^= 1;
  }
  for (std::size_t l = 0; l < kLanes; ++l) output[l] = x[l];
}

}  // namespace qmetro::kernels
