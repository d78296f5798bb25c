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

#include "nvreadout/spin_hamiltonian.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "nvreadout/errors.hpp"
#include "nvreadout/optimize.hpp"

namespace nvreadout {

namespace {

constexpr double kDegToRad = M_PI / 180.0;

struct GroundOperators {
  ComplexMatrix sx, sy, sz, ix, iy, iz;
};

const GroundOperators& ground_operators() {
  static const GroundOperators ops = [] {
    const auto& s = spin_one();
    return GroundOperators{kron(s.x, s.identity), kron(s.y, s.identity), kron(s.z, s.identity),
                           kron(s.identity, s.x), kron(s.identity, s.y), kron(s.identity, s.z)};
  }();
  return ops;
}

std::vector<double> sorted_frequencies(const GroundSpinParams& params, double bz_mt, double bperp_mt) {
  bperp_mt = std::abs(bperp_mt);
  const double b = std::hypot(bz_mt, bperp_mt);
  const double theta = b > 0 ? std::atan2(bperp_mt, bz_mt) / kDegToRad : 0.0;
  return odmr_transitions(params, FieldVector{b, theta}).frequencies();
}

// Residuals between measured and predicted lines: pairwise on sorted lists
// when the counts agree, nearest predicted line otherwise.
void line_residuals(const std::vector<double>& measured, const std::vector<double>& predicted,
                    std::span<double> out) {
  if (predicted.size() == measured.size()) {
    for (std::size_t i = 0; i < measured.size(); ++i) out[i] = measured[i] - predicted[i];
    return;
  }
  for (std::size_t i = 0; i < measured.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (double p : predicted) {
      if (std::abs(measured[i] - p) < std::abs(best)) best = measured[i] - p;
    }
    out[i] = best;
  }
}

}  // namespace

void GroundSpinParams::validate() const {
  const double vals[] = {zero_field_hz, gamma_e_hz_per_mt, gamma_n_hz_per_mt, quadrupole_hz, a_parallel_hz, a_perp_hz};
  for (double v : vals) {
    if (!std::isfinite(v)) throw InvalidArgument("GroundSpinParams: non-finite value");
  }
  if (zero_field_hz <= 0) throw InvalidArgument("GroundSpinParams: zero-field splitting must be positive");
}

void FieldVector::validate() const {
  if (!std::isfinite(magnitude_mt) || magnitude_mt < 0) throw InvalidArgument("FieldVector: B must be >= 0");
  if (!std::isfinite(theta_deg) || theta_deg < 0 || theta_deg > 180) {
    throw InvalidArgument("FieldVector: theta must lie in [0, 180] degrees");
  }
}

std::string_view branch_label(SpinBranch branch) {
  switch (branch) {
    case SpinBranch::kMinusOne: return "-1";
    case SpinBranch::kPlusOne: return "+1";
    case SpinBranch::kDegenerate: return "+-1";
  }
  return "?";
}

SpinBranch parse_branch_label(std::string_view label) {
  if (label == "-1") return SpinBranch::kMinusOne;
  if (label == "+1" || label == "1") return SpinBranch::kPlusOne;
  if (label == "+-1" || label == "±1") return SpinBranch::kDegenerate;
  throw DataError("unknown ODMR branch label '" + std::string(label) + "'");
}

std::vector<double> OdmrLineSet::frequencies() const {
  std::vector<double> f;
  f.reserve(lines.size());
  for (const auto& l : lines) f.push_back(l.frequency_hz);
  return f;
}

void OdmrLineSet::sort() {
  std::stable_sort(lines.begin(), lines.end(),
                   [](const OdmrLine& a, const OdmrLine& b) { return a.frequency_hz < b.frequency_hz; });
}

ComplexMatrix build_ground_hamiltonian(const GroundSpinParams& params, const FieldVector& field, double azimuth_deg) {
  params.validate();
  field.validate();
  const auto& op = ground_operators();
  const double theta = field.theta_deg * kDegToRad;
  const double phi = azimuth_deg * kDegToRad;
  const double bx = field.magnitude_mt * std::sin(theta) * std::cos(phi);
  const double by = field.magnitude_mt * std::sin(theta) * std::sin(phi);
  const double bz = field.magnitude_mt * std::cos(theta);

  ComplexMatrix h = params.zero_field_hz * op.sz * op.sz;
  h += params.gamma_e_hz_per_mt * (bx * op.sx + by * op.sy + bz * op.sz);
  h += params.a_parallel_hz * op.sz * op.iz;
  h += params.a_perp_hz * (op.sx * op.ix + op.sy * op.iy);
  h += params.quadrupole_hz * op.iz * op.iz;
  h += params.gamma_n_hz_per_mt * (bx * op.ix + by * op.iy + bz * op.iz);
  // Clean rounding noise so the matrix is exactly Hermitian.
  return 0.5 * (h + ComplexMatrix(h.adjoint()));
}

OdmrLineSet odmr_transitions(const GroundSpinParams& params, const FieldVector& field) {
  const ComplexMatrix h = build_ground_hamiltonian(params, field);
  const Eigensystem es = hermitian_eigensystem(h);
  const auto& op = ground_operators();

  // m_s = 0 weight per eigenstate.
  std::vector<double> zero_weight(kGroundDim);
  for (int c = 0; c < kGroundDim; ++c) {
    double w = 0.0;
    for (int mi = -1; mi <= 1; ++mi) w += std::norm(es.vectors(ground_index(0, mi), c));
    zero_weight[static_cast<std::size_t>(c)] = w;
  }
  std::vector<int> order(kGroundDim);
  for (int i = 0; i < kGroundDim; ++i) order[static_cast<std::size_t>(i)] = i;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return zero_weight[static_cast<std::size_t>(a)] > zero_weight[static_cast<std::size_t>(b)];
  });

  const ComplexMatrix sx_f = es.vectors.adjoint() * op.sx * es.vectors;
  const ComplexMatrix sy_f = es.vectors.adjoint() * op.sy * es.vectors;
  const ComplexMatrix sz_f = es.vectors.adjoint() * op.sz * es.vectors;

  struct Candidate {
    double freq, strength;
    SpinBranch branch;
  };
  std::vector<Candidate> candidates;
  double max_strength = 0.0;
  for (int k = 0; k < 3; ++k) {
    const int i = order[static_cast<std::size_t>(k)];
    for (int k2 = 3; k2 < kGroundDim; ++k2) {
      const int f = order[static_cast<std::size_t>(k2)];
      const double strength = std::norm(sx_f(f, i)) + std::norm(sy_f(f, i));
      const double mz = sz_f(f, f).real();
      const SpinBranch branch =
          mz > 0.5 ? SpinBranch::kPlusOne : (mz < -0.5 ? SpinBranch::kMinusOne : SpinBranch::kDegenerate);
      candidates.push_back({std::abs(es.values(f) - es.values(i)), strength, branch});
      max_strength = std::max(max_strength, strength);
    }
  }
  OdmrLineSet out;
  for (const auto& c : candidates) {
    if (c.strength >= 1e-2 * max_strength) out.lines.push_back({c.freq, c.branch, c.strength});
  }
  out.sort();
  return out;
}

FieldEstimate infer_field(const OdmrLineSet& measured, const GroundSpinParams& params,
                          const FieldInferenceOptions& options) {
  params.validate();
  if (measured.lines.size() < 2) {
    throw InvalidArgument("infer_field: at least two measured lines are required (under-determined)");
  }
  std::vector<double> meas = measured.frequencies();
  std::sort(meas.begin(), meas.end());
  const std::size_t m = meas.size();

  // Parameters in the refinement are (B_z, B_perp); they decouple far better
  // than (B, theta) because first-order shifts depend on B_z only.
  std::vector<double> residual(m);
  auto ssr_at = [&](double bz, double bperp) {
    line_residuals(meas, sorted_frequencies(params, bz, std::abs(bperp)), residual);
    double s = 0.0;
    for (double r : residual) s += r * r;
    return s;
  };

  struct GridPoint {
    double ssr, b, theta;
  };
  std::vector<GridPoint> grid;
  const int nb = static_cast<int>(std::floor(options.b_max_mt / options.b_step_mt + 1e-9));
  const int nt = static_cast<int>(std::floor(90.0 / options.theta_step_deg + 1e-9));
  for (int ib = 0; ib <= nb; ++ib) {
    const double b = ib * options.b_step_mt;
    for (int it = 0; it <= nt; ++it) {
      const double th = it * options.theta_step_deg;
      grid.push_back({ssr_at(b * std::cos(th * kDegToRad), b * std::sin(th * kDegToRad)), b, th});
      if (ib == 0) break;  // theta is irrelevant at B = 0
    }
  }
  std::stable_sort(grid.begin(), grid.end(), [](const GridPoint& a, const GridPoint& b) { return a.ssr < b.ssr; });

  NelderMeadOptions nm;
  nm.absolute_tolerance = 1e-8;
  nm.relative_tolerance = 1e-15;
  nm.x_tolerance = 1e-10;
  nm.max_iterations = 6000;
  nm.initial_step = {options.b_step_mt * 0.5, options.b_step_mt * 0.5};

  NelderMeadResult best;
  const std::size_t starts = std::min<std::size_t>(3, grid.size());
  for (std::size_t s = 0; s < starts; ++s) {
    const auto& g = grid[s];
    auto objective = [&](std::span<const double> x) { return ssr_at(x[0], x[1]); };
    std::vector<double> start{g.b * std::cos(g.theta * kDegToRad), g.b * std::sin(g.theta * kDegToRad)};
    NelderMeadResult r = nelder_mead(objective, start, nm);
    // A second pass from the first optimum tightens the narrow B_perp valley.
    nm.initial_step = {std::max(1e-4, 1e-3 * std::abs(r.x[0])), std::max(1e-4, 0.05 * std::abs(r.x[1]))};
    NelderMeadResult r2 = nelder_mead(objective, r.x, nm);
    if (r2.value < r.value) r = r2;
    nm.initial_step = {options.b_step_mt * 0.5, options.b_step_mt * 0.5};
    if (r.value < best.value) best = r;
  }

  const double bz = best.x[0];
  const double bperp = std::abs(best.x[1]);
  FieldEstimate est;
  est.field.magnitude_mt = std::hypot(bz, bperp);
  double theta = est.field.magnitude_mt > 0 ? std::atan2(bperp, std::abs(bz)) / kDegToRad : 0.0;
  est.field.theta_deg = std::clamp(theta, 0.0, 90.0);
  est.rms_residual_hz = std::sqrt(best.value / static_cast<double>(m));
  est.theta_defined = est.field.magnitude_mt >= options.zero_field_threshold_mt;
  if (!(est.rms_residual_hz < options.rms_tolerance_hz)) {
    throw ConvergenceError("infer_field: best RMS residual " + std::to_string(est.rms_residual_hz) +
                           " Hz exceeds tolerance");
  }

  // Uncertainties from the Gauss-Newton curvature in (B, theta).
  if (est.theta_defined) {
    ResidualFn fn = [&](std::span<const double> x, std::span<double> out) {
      const double th = x[1] * kDegToRad;
      line_residuals(meas, sorted_frequencies(params, x[0] * std::cos(th), x[0] * std::sin(th)), out);
    };
    const std::vector<double> x{est.field.magnitude_mt, est.field.theta_deg};
    std::vector<double> base(m);
    fn(x, base);
    LeastSquaresOptions lso;
    lso.typical_scale = {0.01, 1.0};
    lso.central_differences = true;
    const Eigen::MatrixXd jac = numeric_jacobian(fn, m, x, base, lso);
    const Eigen::Matrix2d jtj = jac.transpose() * jac;
    const double dof = m > 2 ? static_cast<double>(m - 2) : 1.0;
    const double s2 = std::max(best.value / dof, options.line_uncertainty_hz * options.line_uncertainty_hz);
    if (std::abs(jtj.determinant()) > 0) {
      const Eigen::Matrix2d cov = s2 * jtj.inverse();
      est.sigma_magnitude_mt = std::sqrt(std::max(cov(0, 0), 0.0));
      est.sigma_theta_deg = std::sqrt(std::max(cov(1, 1), 0.0));
    } else {
      est.sigma_magnitude_mt = est.sigma_theta_deg = std::numeric_limits<double>::infinity();
    }
  } else {
    est.field.theta_deg = 0.0;
    est.sigma_theta_deg = std::numeric_limits<double>::quiet_NaN();
  }
  return est;
}

}  // namespace nvreadout
