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

// Low-temperature NV- optical level structure: 3A2 ground triplet, 3E
// excited fine structure and uncoupled singlet placeholders (14 levels).
// Energies are in GHz in a detuning frame: the excited-state offset is
// chosen so that transition energies read as laser detuning from the
// 637.20 nm reference.

#ifndef NVREADOUT_EXCITED_STATE_HPP
#define NVREADOUT_EXCITED_STATE_HPP

#include <cstddef>
#include <string>
#include <vector>

#include "nvreadout/excited_state_templates.hpp"
#include "nvreadout/linalg.hpp"
#include "nvreadout/spin_hamiltonian.hpp"

namespace nvreadout {

struct ExcitedStateParams {
  // Diagonal coarse level energies (GHz, detuning frame).
  double ground_offset_ghz = 0.0;
  double excited_offset_ghz = 4.9;
  double singlet_1e_ghz = -373600.0;
  double singlet_1a1_ghz = -85800.0;
  double singlet_1e_prime_ghz = 145100.0;

  // Spin-spin.
  double ground_zero_field_ghz = 2.87;
  double excited_axial_ss_ghz = 1.42;   // Delta
  double excited_perp_ss_ghz = 1.55;    // Delta', A1-A2 splitting is 2 Delta'
  double excited_mixing_ss_ghz = 0.2;   // Delta''

  // Spin-orbit.
  double spin_orbit_axial_ghz = 5.3;    // lambda_parallel

  double gamma_e_ghz_per_mt = 0.028;

  ExcitedStateTemplates templates = excited_state_templates();

  void validate() const;
};

struct StrainField {
  /// Non-axial strain (GHz).
  double xi_perp_ghz = 0.0;

  void validate() const;
};

/// 14x14 Hermitian Hamiltonian (GHz).
ComplexMatrix build_excited_hamiltonian(const ExcitedStateParams& params, const StrainField& strain,
                                        const FieldVector& field);

/// Eigenpairs with each eigenvector assigned to the manifold holding most of
/// its weight. Blocks that the Hamiltonian leaves uncoupled are diagonalized
/// separately so that accidental degeneracies between manifolds cannot mix
/// them. Ordered by ascending eigenvalue.
struct ExcitedEigensystem {
  Eigen::VectorXd values;
  ComplexMatrix vectors;
  std::vector<Manifold> manifold;

  std::vector<int> indices_of(Manifold m) const;
};

ExcitedEigensystem solve_excited(const ComplexMatrix& h);

struct TransitionRow {
  int ground_index = 0;   // 0..2, ascending ground energy
  int excited_index = 0;  // 0..5, ascending excited energy
  double energy_ghz = 0.0;
  double strength = 0.0;
  int ground_spin = 0;    // dominant m_s of the ground state
  int excited_spin = 0;   // dominant m_s of the excited state
};

/// All ground x excited pairs (3 x 6 rows), ground-major.
struct TransitionTable {
  std::vector<TransitionRow> rows;

  /// Row indices of the `count` strongest rows starting from a ground state
  /// of m_s = 0 character, strongest first.
  std::vector<std::size_t> strongest_zero_rows(std::size_t count = 2) const;
};

TransitionTable transition_table(const ExcitedEigensystem& eig, const ExcitedStateParams& params);

/// Convenience: Hamiltonian, eigensystem and table in one step.
TransitionTable transitions_at(const ExcitedStateParams& params, const StrainField& strain,
                               const FieldVector& field);

struct PleSpectrum {
  std::vector<double> detuning_ghz;
  std::vector<double> intensity;
  std::vector<std::string> warnings;
};

/// Strengths below this are treated as zero in spectrum synthesis.
inline constexpr double kZeroStrength = 1e-14;

/// Lorentzian sum with amplitude A = M and width parameter gamma = M / 10
/// for every line; lines with zero strength are skipped and reported in
/// `warnings`.
PleSpectrum synth_ple_spectrum(const TransitionTable& table, const std::vector<double>& grid);

struct FieldMapPoint {
  double b_mt = 0.0;
  TransitionTable table;
  std::vector<std::size_t> highlighted;  // strongest |0> rows
};

/// Transition tables along a monotone field-magnitude sweep at fixed strain
/// and angle.
std::vector<FieldMapPoint> field_strain_map(const ExcitedStateParams& params, const StrainField& strain,
                                            const std::vector<double>& b_mt, double theta_deg);

/// Energies (GHz, ascending) of the six 3E levels across a strain sweep.
std::vector<std::vector<double>> excited_levels_vs_strain(const ExcitedStateParams& params,
                                                          const std::vector<double>& xi_perp_ghz,
                                                          const FieldVector& field);

}  // namespace nvreadout

#endif  // NVREADOUT_EXCITED_STATE_HPP
