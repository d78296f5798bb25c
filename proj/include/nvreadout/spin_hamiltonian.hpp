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

// Ground-state electron (S = 1) plus 14N nuclear (I = 1) spin Hamiltonian,
// ODMR transition prediction, and magnetic-field inference from measured
// hyperfine lines.
//
// Basis: |m_s> (x) |m_I>, lexicographic with m_s outer and both quantum
// numbers ascending: index = 3 * (m_s + 1) + (m_I + 1). All energies are in
// Hz (E / h). The field lies in the x-z plane (azimuth 0); the Hamiltonian
// is axially symmetric, so the azimuth never changes eigenvalues.

#ifndef NVREADOUT_SPIN_HAMILTONIAN_HPP
#define NVREADOUT_SPIN_HAMILTONIAN_HPP

#include <string>
#include <string_view>
#include <vector>

#include "nvreadout/linalg.hpp"

namespace nvreadout {

struct GroundSpinParams {
  double zero_field_hz = 2.87e9;
  double gamma_e_hz_per_mt = 28.0e6;
  double gamma_n_hz_per_mt = -3.08e3;
  double quadrupole_hz = -4.945e6;
  double a_parallel_hz = -2.16e6;
  double a_perp_hz = -2.62e6;

  void validate() const;
};

struct FieldVector {
  double magnitude_mt = 0.0;
  /// Polar angle from the NV axis, degrees.
  double theta_deg = 0.0;

  void validate() const;
};

enum class SpinBranch { kMinusOne, kPlusOne, kDegenerate };

std::string_view branch_label(SpinBranch branch);
SpinBranch parse_branch_label(std::string_view label);

struct OdmrLine {
  double frequency_hz = 0.0;
  SpinBranch branch = SpinBranch::kDegenerate;
  /// |<f|Sx|i>|^2 + |<f|Sy|i>|^2; informational only.
  double strength = 0.0;
};

/// Lines sorted by ascending frequency.
struct OdmrLineSet {
  std::vector<OdmrLine> lines;

  std::vector<double> frequencies() const;
  void sort();
};

inline constexpr int kGroundDim = 9;

inline constexpr int ground_index(int ms, int mi) { return 3 * (ms + 1) + (mi + 1); }

/// 9x9 Hermitian Hamiltonian in Hz. `azimuth_deg` rotates the transverse
/// field about the NV axis (used to check axial symmetry).
ComplexMatrix build_ground_hamiltonian(const GroundSpinParams& params, const FieldVector& field,
                                       double azimuth_deg = 0.0);

/// Allowed electron-spin transitions out of the m_s = 0 manifold.
OdmrLineSet odmr_transitions(const GroundSpinParams& params, const FieldVector& field);

struct FieldInferenceOptions {
  double b_max_mt = 5.0;
  double b_step_mt = 0.05;
  double theta_step_deg = 1.0;
  /// Refined fits whose RMS residual exceeds this are rejected.
  double rms_tolerance_hz = 0.1e6;
  /// Assumed 1-sigma uncertainty of each measured line; combined with the
  /// fit residual scatter when forming parameter uncertainties.
  double line_uncertainty_hz = 0.0;
  /// Fields below this leave theta unidentifiable.
  double zero_field_threshold_mt = 0.02;
};

struct FieldEstimate {
  FieldVector field;
  double sigma_magnitude_mt = 0.0;
  double sigma_theta_deg = 0.0;
  double rms_residual_hz = 0.0;
  bool theta_defined = true;
};

/// Least-squares (B, theta) from measured lines: coarse grid, then simplex
/// refinement. theta is reported in [0, 90] deg; theta and 180 - theta give
/// identical spectra.
FieldEstimate infer_field(const OdmrLineSet& measured, const GroundSpinParams& params,
                          const FieldInferenceOptions& options = {});

}  // namespace nvreadout

#endif  // NVREADOUT_SPIN_HAMILTONIAN_HPP
