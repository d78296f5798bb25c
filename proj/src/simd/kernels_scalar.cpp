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

namespace nvreadout::simd::detail {
namespace {

double sum_squares(const double* x, std::size_t n) {
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += x[i] * x[i];
  return sum;
}

double sum_squared_difference(const double* a, const double* b, std::size_t n) {
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return sum;
}

void lorentzian_accumulate(const double* grid, std::size_t n, double center, double height, double gamma,
                           double* out) {
  const double g2 = gamma * gamma;
  for (std::size_t k = 0; k < n; ++k) {
    const double d = grid[k] - center;
    out[k] += height * g2 / (g2 + d * d);
  }
}

void propagate_batch(const double* transfer, double* pops, std::size_t lanes, std::size_t stride,
                     std::size_t bins, const double* f0, const double* f1, double* out) {
  for (std::size_t l = 0; l < lanes; ++l) {
    double n[kRateStates];
    for (std::size_t s = 0; s < kRateStates; ++s) n[s] = pops[s * stride + l];
    const double mass = n[0] + n[1] + n[2] + n[3] + n[4];
    auto renormalize = [&] {
      const double total = n[0] + n[1] + n[2] + n[3] + n[4];
      if (total > 0.0)
        for (std::size_t s = 0; s < kRateStates; ++s) n[s] *= mass / total;
    };
    for (std::size_t bin = 0; bin < bins; ++bin) {
      out[bin * stride + l] = f0[l] * n[0] + f1[l] * (n[1] + n[2]);
      double next[kRateStates];
      for (std::size_t r = 0; r < kRateStates; ++r) {
        const double* row = transfer + r * kRateStates;
        double acc = row[0] * n[0];
        for (std::size_t c = 1; c < kRateStates; ++c) acc += row[c] * n[c];
        next[r] = acc;
      }
      for (std::size_t s = 0; s < kRateStates; ++s) n[s] = next[s];
      if ((bin + 1) % kRenormInterval == 0) renormalize();
    }
    renormalize();
    for (std::size_t s = 0; s < kRateStates; ++s) pops[s * stride + l] = n[s];
  }
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{&sum_squares, &sum_squared_difference, &lorentzian_accumulate, &propagate_batch};
  return table;
}

}  // namespace nvreadout::simd::detail
