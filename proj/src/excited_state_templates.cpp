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

#include "nvreadout/excited_state_templates.hpp"

#include <cmath>

namespace nvreadout {

namespace {

ComplexMatrix pauli(char which) {
  ComplexMatrix m = ComplexMatrix::Zero(2, 2);
  switch (which) {
    case 'x': m(0, 1) = m(1, 0) = 1.0; break;
    case 'y': m(0, 1) = Complex(0, -1); m(1, 0) = Complex(0, 1); break;
    case 'z': m(0, 0) = 1.0; m(1, 1) = -1.0; break;
    default: m = ComplexMatrix::Identity(2, 2);
  }
  return m;
}

ComplexMatrix embed_ground(const ComplexMatrix& block) {
  ComplexMatrix m = ComplexMatrix::Zero(kLevelCount, kLevelCount);
  m.block(kGroundBegin, kGroundBegin, 3, 3) = block;
  return m;
}

ComplexMatrix embed_excited(const ComplexMatrix& block) {
  ComplexMatrix m = ComplexMatrix::Zero(kLevelCount, kLevelCount);
  m.block(kExcitedBegin, kExcitedBegin, 6, 6) = block;
  return m;
}

ComplexMatrix diagonal_projector(std::initializer_list<int> indices) {
  ComplexMatrix m = ComplexMatrix::Zero(kLevelCount, kLevelCount);
  for (int i : indices) m(i, i) = 1.0;
  return m;
}

// 3A2 |m_s> <-> 3E orbital |m_s>, orbital 0 = x, 1 = y.
ComplexMatrix dipole(int orbital) {
  ComplexMatrix m = ComplexMatrix::Zero(kLevelCount, kLevelCount);
  for (int s = 0; s < 3; ++s) {
    const int g = kGroundBegin + s;
    const int e = kExcitedBegin + 3 * orbital + s;
    m(e, g) = 1.0;
    m(g, e) = 1.0;
  }
  return m;
}

ComplexMatrix anticommutator(const ComplexMatrix& a, const ComplexMatrix& b) { return a * b + b * a; }

}  // namespace

const ExcitedStateTemplates& excited_state_templates() {
  static const ExcitedStateTemplates t = [] {
    const auto& s = spin_one();
    const ComplexMatrix i2 = pauli('1');
    const ComplexMatrix sx = pauli('x'), sy = pauli('y'), sz = pauli('z');
    const ComplexMatrix axial = s.z * s.z - (2.0 / 3.0) * s.identity;

    ExcitedStateTemplates out;
    out.ground_projector = embed_ground(s.identity);
    out.excited_projector = embed_excited(kron(i2, s.identity));
    out.singlet_1e = diagonal_projector({9, 10});
    out.singlet_1a1 = diagonal_projector({11});
    out.singlet_1e_prime = diagonal_projector({12, 13});
    out.ss_ground_axial = embed_ground(axial);
    out.ss_excited_axial = embed_excited(kron(i2, axial));
    out.ss_excited_perp =
        embed_excited(-0.5 * (kron(sz, s.x * s.x - s.y * s.y) + kron(sx, anticommutator(s.x, s.y))));
    out.ss_excited_mixing = embed_excited(
        (1.0 / std::sqrt(2.0)) * (kron(sz, anticommutator(s.z, s.x)) - kron(sx, anticommutator(s.z, s.y))));
    out.spin_orbit = embed_excited(-kron(sy, s.z));
    out.orbital_x_a = dipole(0);
    out.orbital_y_a = dipole(1);
    out.orbital_x_b = embed_excited(kron(sz, s.identity));
    out.orbital_y_b = embed_excited(-kron(sx, s.identity));
    out.spin_x = embed_ground(s.x) + embed_excited(kron(i2, s.x));
    out.spin_y = embed_ground(s.y) + embed_excited(kron(i2, s.y));
    out.spin_z = embed_ground(s.z) + embed_excited(kron(i2, s.z));
    return out;
  }();
  return t;
}

}  // namespace nvreadout
