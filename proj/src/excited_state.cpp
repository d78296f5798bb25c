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

#include "nvreadout/excited_state.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "nvreadout/errors.hpp"
#include "nvreadout/simd/kernels.hpp"

namespace nvreadout {

namespace {

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw InvalidArgument(std::string("ExcitedStateParams: ") + what + " must be finite");
}

void require_template(const ComplexMatrix& m, const char* what) {
  if (m.rows() != kLevelCount || m.cols() != kLevelCount)
    throw InvalidArgument(std::string("ExcitedStateParams: template ") + what + " must be 14x14");
  if (hermiticity_defect(m) > 1e-12)
    throw InvalidArgument(std::string("ExcitedStateParams: template ") + what + " is not Hermitian");
}

int dominant_spin(const ComplexMatrix& vectors, int col) {
  double w[3] = {0.0, 0.0, 0.0};
  for (int i = 0; i < kSingletBegin; ++i) w[triplet_ms(i) + 1] += std::norm(vectors(i, col));
  // Ties resolve toward m_s = 0, then -1.
  int best = 1;
  if (w[0] > w[best]) best = 0;
  if (w[2] > w[best]) best = 2;
  return best - 1;
}

}  // namespace

void ExcitedStateParams::validate() const {
  require_finite(ground_offset_ghz, "ground_offset_ghz");
  require_finite(excited_offset_ghz, "excited_offset_ghz");
  require_finite(singlet_1e_ghz, "singlet_1e_ghz");
  require_finite(singlet_1a1_ghz, "singlet_1a1_ghz");
  require_finite(singlet_1e_prime_ghz, "singlet_1e_prime_ghz");
  require_finite(ground_zero_field_ghz, "ground_zero_field_ghz");
  require_finite(excited_axial_ss_ghz, "excited_axial_ss_ghz");
  require_finite(excited_perp_ss_ghz, "excited_perp_ss_ghz");
  require_finite(excited_mixing_ss_ghz, "excited_mixing_ss_ghz");
  require_finite(spin_orbit_axial_ghz, "spin_orbit_axial_ghz");
  require_finite(gamma_e_ghz_per_mt, "gamma_e_ghz_per_mt");
  const auto& t = templates;
  require_template(t.ground_projector, "ground_projector");
  require_template(t.excited_projector, "excited_projector");
  require_template(t.singlet_1e, "singlet_1e");
  require_template(t.singlet_1a1, "singlet_1a1");
  require_template(t.singlet_1e_prime, "singlet_1e_prime");
  require_template(t.ss_ground_axial, "ss_ground_axial");
  require_template(t.ss_excited_axial, "ss_excited_axial");
  require_template(t.ss_excited_perp, "ss_excited_perp");
  require_template(t.ss_excited_mixing, "ss_excited_mixing");
  require_template(t.spin_orbit, "spin_orbit");
  require_template(t.orbital_x_a, "orbital_x_a");
  require_template(t.orbital_x_b, "orbital_x_b");
  require_template(t.orbital_y_a, "orbital_y_a");
  require_template(t.orbital_y_b, "orbital_y_b");
  require_template(t.spin_x, "spin_x");
  require_template(t.spin_y, "spin_y");
  require_template(t.spin_z, "spin_z");
}

void StrainField::validate() const {
  if (!std::isfinite(xi_perp_ghz) || xi_perp_ghz < 0.0)
    throw InvalidArgument("StrainField: xi_perp must be finite and >= 0");
}

ComplexMatrix build_excited_hamiltonian(const ExcitedStateParams& p, const StrainField& strain,
                                        const FieldVector& field) {
  p.validate();
  strain.validate();
  field.validate();
  const auto& t = p.templates;
  const double theta = field.theta_deg * std::numbers::pi / 180.0;
  const double bx = p.gamma_e_ghz_per_mt * field.magnitude_mt * std::sin(theta);
  const double bz = p.gamma_e_ghz_per_mt * field.magnitude_mt * std::cos(theta);

  ComplexMatrix h = p.ground_offset_ghz * t.ground_projector + p.excited_offset_ghz * t.excited_projector +
                    p.singlet_1e_ghz * t.singlet_1e + p.singlet_1a1_ghz * t.singlet_1a1 +
                    p.singlet_1e_prime_ghz * t.singlet_1e_prime;
  h += p.ground_zero_field_ghz * t.ss_ground_axial + p.excited_axial_ss_ghz * t.ss_excited_axial +
       p.excited_perp_ss_ghz * t.ss_excited_perp + p.excited_mixing_ss_ghz * t.ss_excited_mixing;
  h += p.spin_orbit_axial_ghz * t.spin_orbit;
  h += strain.xi_perp_ghz * t.orbital_x_b;
  h += bx * t.spin_x + bz * t.spin_z;
  return 0.5 * (h + h.adjoint());
}

std::vector<int> ExcitedEigensystem::indices_of(Manifold m) const {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(manifold.size()); ++i)
    if (manifold[i] == m) out.push_back(i);
  return out;
}

ExcitedEigensystem solve_excited(const ComplexMatrix& h) {
  if (h.rows() != kLevelCount || h.cols() != kLevelCount)
    throw InvalidArgument("solve_excited: expected a 14x14 matrix");

  // Partition basis indices into groups connected by nonzero couplings.
  std::vector<int> group(kLevelCount);
  for (int i = 0; i < kLevelCount; ++i) group[i] = i;
  auto find = [&](int i) {
    while (group[i] != i) i = group[i] = group[group[i]];
    return i;
  };
  for (int i = 0; i < kLevelCount; ++i)
    for (int j = i + 1; j < kLevelCount; ++j)
      if (h(i, j) != Complex(0.0, 0.0) || h(j, i) != Complex(0.0, 0.0)) group[find(i)] = find(j);

  Eigen::VectorXd values(kLevelCount);
  ComplexMatrix vectors = ComplexMatrix::Zero(kLevelCount, kLevelCount);
  int col = 0;
  std::vector<bool> done(kLevelCount, false);
  for (int root = 0; root < kLevelCount; ++root) {
    if (done[root]) continue;
    const int r = find(root);
    std::vector<int> members;
    for (int i = 0; i < kLevelCount; ++i)
      if (find(i) == r) members.push_back(i);
    for (int i : members) done[i] = true;
    const int n = static_cast<int>(members.size());
    ComplexMatrix block(n, n);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) block(a, b) = h(members[a], members[b]);
    const Eigensystem es = hermitian_eigensystem(block);
    for (int k = 0; k < n; ++k, ++col) {
      values(col) = es.values(k);
      for (int a = 0; a < n; ++a) vectors(members[a], col) = es.vectors(a, k);
    }
  }

  std::vector<int> order(kLevelCount);
  for (int i = 0; i < kLevelCount; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return values(a) < values(b); });

  ExcitedEigensystem out;
  out.values.resize(kLevelCount);
  out.vectors.resize(kLevelCount, kLevelCount);
  out.manifold.resize(kLevelCount);
  for (int k = 0; k < kLevelCount; ++k) {
    out.values(k) = values(order[k]);
    out.vectors.col(k) = vectors.col(order[k]);
    double w[3] = {0.0, 0.0, 0.0};
    for (int i = 0; i < kLevelCount; ++i) w[static_cast<int>(manifold_of(i))] += std::norm(out.vectors(i, k));
    int best = 0;
    if (w[1] > w[best]) best = 1;
    if (w[2] > w[best]) best = 2;
    out.manifold[k] = static_cast<Manifold>(best);
  }
  return out;
}

TransitionTable transition_table(const ExcitedEigensystem& eig, const ExcitedStateParams& params) {
  const auto ground = eig.indices_of(Manifold::kGround);
  const auto excited = eig.indices_of(Manifold::kExcited);
  const ComplexMatrix op = params.templates.orbital_x_a + params.templates.orbital_y_a;
  const ComplexMatrix op_vectors = op * eig.vectors;

  TransitionTable table;
  table.rows.reserve(ground.size() * excited.size());
  for (std::size_t gi = 0; gi < ground.size(); ++gi) {
    const int i = ground[gi];
    for (std::size_t ei = 0; ei < excited.size(); ++ei) {
      const int f = excited[ei];
      TransitionRow row;
      row.ground_index = static_cast<int>(gi);
      row.excited_index = static_cast<int>(ei);
      row.energy_ghz = eig.values(f) - eig.values(i);
      row.strength = std::norm(eig.vectors.col(f).dot(op_vectors.col(i)));
      row.ground_spin = dominant_spin(eig.vectors, i);
      row.excited_spin = dominant_spin(eig.vectors, f);
      table.rows.push_back(row);
    }
  }
  return table;
}

TransitionTable transitions_at(const ExcitedStateParams& params, const StrainField& strain,
                               const FieldVector& field) {
  return transition_table(solve_excited(build_excited_hamiltonian(params, strain, field)), params);
}

std::vector<std::size_t> TransitionTable::strongest_zero_rows(std::size_t count) const {
  std::vector<std::size_t> idx;
  for (std::size_t r = 0; r < rows.size(); ++r)
    if (rows[r].ground_spin == 0) idx.push_back(r);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return rows[a].strength > rows[b].strength; });
  if (idx.size() > count) idx.resize(count);
  return idx;
}

PleSpectrum synth_ple_spectrum(const TransitionTable& table, const std::vector<double>& grid) {
  if (table.rows.empty()) throw InvalidArgument("synth_ple_spectrum: empty transition table");
  PleSpectrum out;
  out.detuning_ghz = grid;
  out.intensity.assign(grid.size(), 0.0);
  const auto& k = simd::kernels();
  for (const auto& row : table.rows) {
    if (!(row.strength > kZeroStrength)) {
      out.warnings.push_back("skipped zero-strength line at " + std::to_string(row.energy_ghz) + " GHz (ground " +
                             std::to_string(row.ground_index) + ", excited " + std::to_string(row.excited_index) +
                             ")");
      continue;
    }
    const double gamma = row.strength / 10.0;
    const double height = row.strength / (std::sqrt(std::numbers::pi) * gamma);
    k.lorentzian_accumulate(grid.data(), grid.size(), row.energy_ghz, height, gamma, out.intensity.data());
  }
  return out;
}

std::vector<FieldMapPoint> field_strain_map(const ExcitedStateParams& params, const StrainField& strain,
                                            const std::vector<double>& b_mt, double theta_deg) {
  for (std::size_t i = 1; i < b_mt.size(); ++i)
    if (!(b_mt[i] >= b_mt[i - 1])) throw InvalidArgument("field_strain_map: field sweep must be monotone");
  std::vector<FieldMapPoint> out(b_mt.size());
  for (std::size_t i = 0; i < b_mt.size(); ++i) {
    out[i].b_mt = b_mt[i];
    out[i].table = transitions_at(params, strain, FieldVector{b_mt[i], theta_deg});
    out[i].highlighted = out[i].table.strongest_zero_rows(2);
  }
  return out;
}

std::vector<std::vector<double>> excited_levels_vs_strain(const ExcitedStateParams& params,
                                                          const std::vector<double>& xi_perp_ghz,
                                                          const FieldVector& field) {
  std::vector<std::vector<double>> out;
  out.reserve(xi_perp_ghz.size());
  for (double xi : xi_perp_ghz) {
    const auto eig = solve_excited(build_excited_hamiltonian(params, StrainField{xi}, field));
    std::vector<double> levels;
    for (int k : eig.indices_of(Manifold::kExcited)) levels.push_back(eig.values(k));
    out.push_back(std::move(levels));
  }
  return out;
}

}  // namespace nvreadout
