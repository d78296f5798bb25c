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

// Constant 14x14 operator templates for the low-temperature NV- level
// model. Version tag "nv14-v1".
//
// Basis (index: state)
//   0..2   3A2 ground triplet, m_s = -1, 0, +1
//   3..5   3E orbital x, m_s = -1, 0, +1
//   6..8   3E orbital y, m_s = -1, 0, +1
//   9, 10  1E  (x, y)   singlet placeholders
//   11     1A1          singlet placeholder
//   12, 13 1E' (x, y)   singlet placeholders
//
// The templates are dimensionless; ExcitedStateParams scales them. They are
// built from the orbital (x) spin algebra of the E doublet with
// sigma_y playing the role of the axial orbital angular momentum:
//   spin_orbit            -sigma_y (x) S_z
//   ss_excited_axial      1 (x) (S_z^2 - 2/3)
//   ss_excited_perp       -1/2 [sigma_z (x) (Sx^2 - Sy^2) + sigma_x (x) {Sx, Sy}]
//   ss_excited_mixing     1/sqrt2 [sigma_z (x) {Sz, Sx} - sigma_x (x) {Sz, Sy}]
//   orbital_x_a / _y_a    3A2 |m_s> <-> 3E x/y |m_s> dipole coupling
//   orbital_x_b / _y_b    sigma_z / -sigma_x on 3E (strain-like)
// With these, the zero-strain 3E levels come out as A1/A2 at
// +lambda + Delta/3 -/+ Delta', E1/E2 at -lambda + Delta/3 and Ex/Ey at
// -2 Delta/3, with Delta'' mixing E1,2 into Ey,x.

#ifndef NVREADOUT_EXCITED_STATE_TEMPLATES_HPP
#define NVREADOUT_EXCITED_STATE_TEMPLATES_HPP

#include <string_view>

#include "nvreadout/linalg.hpp"

namespace nvreadout {

inline constexpr int kLevelCount = 14;
inline constexpr int kGroundBegin = 0;
inline constexpr int kExcitedBegin = 3;
inline constexpr int kSingletBegin = 9;
inline constexpr std::string_view kTemplateVersion = "nv14-v1";

enum class Manifold { kGround, kExcited, kSinglet };

inline constexpr Manifold manifold_of(int index) {
  return index < kExcitedBegin ? Manifold::kGround : (index < kSingletBegin ? Manifold::kExcited : Manifold::kSinglet);
}

/// Spin projection m_s of a triplet basis index (ground or excited).
inline constexpr int triplet_ms(int index) {
  return index < kExcitedBegin ? index - 1 : ((index - kExcitedBegin) % 3) - 1;
}

struct ExcitedStateTemplates {
  ComplexMatrix ground_projector;   // identity on 3A2
  ComplexMatrix excited_projector;  // identity on 3E
  ComplexMatrix singlet_1e, singlet_1a1, singlet_1e_prime;  // diagonal projectors
  ComplexMatrix ss_ground_axial;    // (S_z^2 - 2/3) on 3A2
  ComplexMatrix ss_excited_axial;
  ComplexMatrix ss_excited_perp;
  ComplexMatrix ss_excited_mixing;
  ComplexMatrix spin_orbit;
  ComplexMatrix orbital_x_a, orbital_x_b;
  ComplexMatrix orbital_y_a, orbital_y_b;
  ComplexMatrix spin_x, spin_y, spin_z;  // total spin on both triplets
};

const ExcitedStateTemplates& excited_state_templates();

}  // namespace nvreadout

#endif  // NVREADOUT_EXCITED_STATE_TEMPLATES_HPP
