// Copyright 2026 The nvreadout Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "nvreadout/simd/kernels.hpp"

#if defined(__aarch64__)

#include <arm_neon.h>

namespace nvreadout::simd::detail {
namespace {

double sum_squares(const double* x, std::size_t n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t v = vld1q_f64(x + i);
    acc = vfmaq_f64(acc, v, v);
  }
  double sum = vaddvq_f64(acc);
  for (; i < n; ++i) sum += x[i] * x[i];
  return sum;
}

double sum_squared_difference(const double* a, const double* b, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const float64x2_t d0 = vsubq_f64(vld1q_f64(a + i), vld1q_f64(b + i));
    const float64x2_t d1 = vsubq_f64(vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
    acc0 = vfmaq_f64(acc0, d0, d0);
    acc1 = vfmaq_f64(acc1, d1, d1);
  }
  double sum = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return sum;
}

void lorentzian_accumulate(const double* grid, std::size_t n, double center, double height, double gamma,
                           double* out) {
  const double g2 = gamma * gamma;
  const float64x2_t vc = vdupq_n_f64(center);
  const float64x2_t vg2 = vdupq_n_f64(g2);
  const float64x2_t vnum = vdupq_n_f64(height * g2);
  std::size_t k = 0;
  for (; k + 2 <= n; k += 2) {
    const float64x2_t d = vsubq_f64(vld1q_f64(grid + k), vc);
    const float64x2_t den = vfmaq_f64(vg2, d, d);
    vst1q_f64(out + k, vaddq_f64(vld1q_f64(out + k), vdivq_f64(vnum, den)));
  }
  for (; k < n; ++k) {
    const double d = grid[k] - center;
    out[k] += height * g2 / (g2 + d * d);
  }
}

void propagate_batch(const double* transfer, double* pops, std::size_t lanes, std::size_t stride,
                     std::size_t bins, const double* f0, const double* f1, double* out) {
  std::size_t l = 0;
  for (; l + 2 <= lanes; l += 2) {
    float64x2_t n[kRateStates];
    for (std::size_t s = 0; s < kRateStates; ++s) n[s] = vld1q_f64(pops + s * stride + l);
    auto total = [&] { return vaddq_f64(vaddq_f64(vaddq_f64(n[0], n[1]), vaddq_f64(n[2], n[3])), n[4]); };
    const float64x2_t mass = total();
    auto renormalize = [&] {
      const float64x2_t t = total();
      const uint64x2_t ok = vcgtq_f64(t, vdupq_n_f64(0.0));
      const float64x2_t scale = vbslq_f64(ok, vdivq_f64(mass, t), vdupq_n_f64(1.0));
      for (std::size_t s = 0; s < kRateStates; ++s) n[s] = vmulq_f64(n[s], scale);
    };
    const float64x2_t w0 = vld1q_f64(f0 + l);
    const float64x2_t w1 = vld1q_f64(f1 + l);
    for (std::size_t bin = 0; bin < bins; ++bin) {
      vst1q_f64(out + bin * stride + l, vfmaq_f64(vmulq_f64(w0, n[0]), w1, vaddq_f64(n[1], n[2])));
      float64x2_t next[kRateStates];
      for (std::size_t r = 0; r < kRateStates; ++r) {
        const double* row = transfer + r * kRateStates;
        float64x2_t acc = vmulq_n_f64(n[0], row[0]);
        for (std::size_t c = 1; c < kRateStates; ++c) acc = vfmaq_n_f64(acc, n[c], row[c]);
        next[r] = acc;
      }
      for (std::size_t s = 0; s < kRateStates; ++s) n[s] = next[s];
      if ((bin + 1) % kRenormInterval == 0) renormalize();
    }
    renormalize();
    for (std::size_t s = 0; s < kRateStates; ++s) vst1q_f64(pops + s * stride + l, n[s]);
  }
  if (l < lanes) {
    scalar_table().propagate_batch(transfer, pops + l, lanes - l, stride, bins, f0 + l, f1 + l, out + l);
  }
}

}  // namespace

const KernelTable& neon_table() {
  static const KernelTable table{&sum_squares, &sum_squared_difference, &lorentzian_accumulate, &propagate_batch};
  return table;
}

}  // namespace nvreadout::simd::detail

#endif  // __aarch64__
