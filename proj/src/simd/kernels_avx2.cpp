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

// Built with -mavx2 -mfma; only reached after a runtime CPUID check.

#include "nvreadout/simd/kernels.hpp"

#include <immintrin.h>

namespace nvreadout::simd::detail {
namespace {

double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d pair = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(pair, _mm_unpackhi_pd(pair, pair)));
}

double sum_squares(const double* x, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256d v0 = _mm256_loadu_pd(x + i);
    const __m256d v1 = _mm256_loadu_pd(x + i + 4);
    acc0 = _mm256_fmadd_pd(v0, v0, acc0);
    acc1 = _mm256_fmadd_pd(v1, v1, acc1);
  }
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_loadu_pd(x + i);
    acc0 = _mm256_fmadd_pd(v, v, acc0);
  }
  double sum = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) sum += x[i] * x[i];
  return sum;
}

double sum_squared_difference(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256d d0 = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    const __m256d d1 = _mm256_sub_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4));
    acc0 = _mm256_fmadd_pd(d0, d0, acc0);
    acc1 = _mm256_fmadd_pd(d1, d1, acc1);
  }
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    acc0 = _mm256_fmadd_pd(d, d, acc0);
  }
  double sum = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return sum;
}

void lorentzian_accumulate(const double* grid, std::size_t n, double center, double height, double gamma,
                           double* out) {
  const double g2 = gamma * gamma;
  const __m256d vc = _mm256_set1_pd(center);
  const __m256d vg2 = _mm256_set1_pd(g2);
  const __m256d vnum = _mm256_set1_pd(height * g2);
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(grid + k), vc);
    const __m256d den = _mm256_fmadd_pd(d, d, vg2);
    _mm256_storeu_pd(out + k, _mm256_add_pd(_mm256_loadu_pd(out + k), _mm256_div_pd(vnum, den)));
  }
  for (; k < n; ++k) {
    const double d = grid[k] - center;
    out[k] += height * g2 / (g2 + d * d);
  }
}

// Four lanes per register; the 5x5 matrix is broadcast once.
void propagate_batch(const double* transfer, double* pops, std::size_t lanes, std::size_t stride,
                     std::size_t bins, const double* f0, const double* f1, double* out) {
  __m256d t[kRateStates][kRateStates];
  for (std::size_t r = 0; r < kRateStates; ++r)
    for (std::size_t c = 0; c < kRateStates; ++c) t[r][c] = _mm256_set1_pd(transfer[r * kRateStates + c]);

  std::size_t l = 0;
  for (; l + 4 <= lanes; l += 4) {
    __m256d n[kRateStates];
    for (std::size_t s = 0; s < kRateStates; ++s) n[s] = _mm256_loadu_pd(pops + s * stride + l);
    auto total = [&] {
      return _mm256_add_pd(_mm256_add_pd(_mm256_add_pd(n[0], n[1]), _mm256_add_pd(n[2], n[3])), n[4]);
    };
    const __m256d mass = total();
    auto renormalize = [&] {
      const __m256d t = total();
      const __m256d ok = _mm256_cmp_pd(t, _mm256_setzero_pd(), _CMP_GT_OQ);
      const __m256d scale = _mm256_blendv_pd(_mm256_set1_pd(1.0), _mm256_div_pd(mass, t), ok);
      for (std::size_t s = 0; s < kRateStates; ++s) n[s] = _mm256_mul_pd(n[s], scale);
    };
    const __m256d w0 = _mm256_loadu_pd(f0 + l);
    const __m256d w1 = _mm256_loadu_pd(f1 + l);
    for (std::size_t bin = 0; bin < bins; ++bin) {
      const __m256d fl = _mm256_fmadd_pd(w1, _mm256_add_pd(n[1], n[2]), _mm256_mul_pd(w0, n[0]));
      _mm256_storeu_pd(out + bin * stride + l, fl);
      __m256d next[kRateStates];
      for (std::size_t r = 0; r < kRateStates; ++r) {
        __m256d acc = _mm256_mul_pd(t[r][0], n[0]);
        for (std::size_t c = 1; c < kRateStates; ++c) acc = _mm256_fmadd_pd(t[r][c], n[c], acc);
        next[r] = acc;
      }
      for (std::size_t s = 0; s < kRateStates; ++s) n[s] = next[s];
      if ((bin + 1) % kRenormInterval == 0) renormalize();
    }
    renormalize();
    for (std::size_t s = 0; s < kRateStates; ++s) _mm256_storeu_pd(pops + s * stride + l, n[s]);
  }
  if (l < lanes) {
    scalar_table().propagate_batch(transfer, pops + l, lanes - l, stride, bins, f0 + l, f1 + l, out + l);
  }
}

}  // namespace

const KernelTable& avx2_table() {
  static const KernelTable table{&sum_squares, &sum_squared_difference, &lorentzian_accumulate, &propagate_batch};
  return table;
}

}  // namespace nvreadout::simd::detail
