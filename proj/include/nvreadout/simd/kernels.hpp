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

// Data-parallel inner loops with a scalar reference implementation and
// vectorized variants (AVX2+FMA on x86-64, NEON on AArch64). The variant is
// picked once at runtime from CPU features; setting the environment variable
// NVREADOUT_SIMD=scalar forces the reference path.
//
// Every variant must agree with the scalar reference to within rounding
// (FMA contraction and a different summation order are the only sources of
// difference); tests/unit/simd_kernels_test.cpp checks this per kernel.

#ifndef NVREADOUT_SIMD_KERNELS_HPP
#define NVREADOUT_SIMD_KERNELS_HPP

#include <cstddef>
#include <string_view>

namespace nvreadout::simd {

enum class Isa { kScalar, kAvx2, kNeon };

std::string_view isa_name(Isa isa);

/// Number of population entries in the rate model (|0>, |+1>, |-1>, singlet, NV0).
inline constexpr std::size_t kRateStates = 5;
inline constexpr std::size_t kRenormInterval = 256;

struct KernelTable {
  /// sum_i x_i^2
  double (*sum_squares)(const double* x, std::size_t n);

  /// sum_i (a_i - b_i)^2
  double (*sum_squared_difference)(const double* a, const double* b, std::size_t n);

  /// out_k += height * gamma^2 / (gamma^2 + (grid_k - center)^2)
  void (*lorentzian_accumulate)(const double* grid, std::size_t n, double center, double height,
                                double gamma, double* out);

  /// Propagates `lanes` independent population vectors through `bins` steps
  /// of the same 5x5 transfer matrix (row-major). Populations are
  /// structure-of-arrays: state s of lane l lives at pops[s * stride + l].
  /// Before each step, out[bin * stride + l] = f0[l] * n0 + f1[l] * (n+1 + n-1).
  /// Every kRenormInterval steps, and after the last, each lane is rescaled
  /// to its starting total so rounding cannot drift the probability mass.
  void (*propagate_batch)(const double* transfer, double* pops, std::size_t lanes, std::size_t stride,
                          std::size_t bins, const double* f0, const double* f1, double* out);
};

bool isa_available(Isa isa);

/// Kernel table for a specific ISA. Throws InvalidArgument if unavailable.
const KernelTable& kernels_for(Isa isa);

/// The ISA selected for this process.
Isa active_isa();

/// Kernel table for the active ISA.
const KernelTable& kernels();

namespace detail {
const KernelTable& scalar_table();
#if defined(__x86_64__) || defined(_M_X64)
const KernelTable& avx2_table();
#endif
#if defined(__aarch64__)
const KernelTable& neon_table();
#endif
}  // namespace detail

}  // namespace nvreadout::simd

#endif  // NVREADOUT_SIMD_KERNELS_HPP
