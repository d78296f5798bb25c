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

#include <gtest/gtest.h>

#include "nvreadout/errors.hpp"
#include "nvreadout/rng.hpp"

namespace nvreadout {
namespace {

TEST(GroundHamiltonian, IsExactlyHermitian) {
  Rng rng(11);
  GroundSpinParams p;
  for (int i = 0; i < 200; ++i) {
    const FieldVector f{5.0 * rng.uniform(), 180.0 * rng.uniform()};
    const ComplexMatrix h = build_ground_hamiltonian(p, f, 360.0 * rng.uniform());
    EXPECT_EQ(hermiticity_defect(h), 0.0);
  }
}

TEST(GroundHamiltonian, AxialTermOnly) {
  GroundSpinParams p{2.87e9, 0.0, 0.0, 0.0, 0.0, 0.0};
  const auto eig = hermitian_eigensystem(build_ground_hamiltonian(p, FieldVector{0.0, 0.0}));
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(eig.values(i), 0.0, 1e-3);
  for (int i = 3; i < 9; ++i) EXPECT_NEAR(eig.values(i), 2.87e9, 1e-3);
}

TEST(GroundHamiltonian, BasisOrderingIsMsOuter) {
  EXPECT_EQ(ground_index(-1, -1), 0);
  EXPECT_EQ(ground_index(-1, 1), 2);
  EXPECT_EQ(ground_index(0, 0), 4);
  EXPECT_EQ(ground_index(1, 1), 8);
  // Diagonal at zero field: <ms mI|H|ms mI> = D ms^2 + Q mI^2 + A_par ms mI.
  GroundSpinParams p;
  const ComplexMatrix h = build_ground_hamiltonian(p, FieldVector{});
  for (int ms = -1; ms <= 1; ++ms)
    for (int mi = -1; mi <= 1; ++mi) {
      const double expect = p.zero_field_hz * ms * ms + p.quadrupole_hz * mi * mi + p.a_parallel_hz * ms * mi;
      EXPECT_NEAR(h(ground_index(ms, mi), ground_index(ms, mi)).real(), expect, 1e-6);
    }
}

TEST(GroundHamiltonian, TraceIndependentOfAngle) {
  GroundSpinParams p;
  const double t0 = build_ground_hamiltonian(p, FieldVector{2.0, 0.0}).trace().real();
  for (double th : {10.0, 45.0, 90.0, 135.0, 180.0})
    EXPECT_NEAR(build_ground_hamiltonian(p, FieldVector{2.0, th}).trace().real(), t0, 1e-3);
}

TEST(GroundHamiltonian, AzimuthLeavesEigenvaluesUnchanged) {
  GroundSpinParams p;
  const FieldVector f{1.3, 57.0};
  const auto ref = hermitian_eigensystem(build_ground_hamiltonian(p, f)).values;
  for (double phi : {30.0, 90.0, 211.0}) {
    const auto v = hermitian_eigensystem(build_ground_hamiltonian(p, f, phi)).values;
    for (int i = 0; i < kGroundDim; ++i) EXPECT_NEAR(v(i), ref(i), 1e-3);
  }
}

TEST(OdmrTransitions, ZeroFieldLinesSpacedByAxialHyperfine) {
  GroundSpinParams p;
  const auto lines = odmr_transitions(p, FieldVector{0.0, 0.0}).frequencies();
  ASSERT_GE(lines.size(), 3u);
  // Distinct line positions, merging the two electron branches.
  std::vector<double> distinct;
  for (double f : lines)
    if (distinct.empty() || f - distinct.back() > 0.2e6) distinct.push_back(f);
  ASSERT_EQ(distinct.size(), 3u);
  EXPECT_NEAR(distinct[1] - distinct[0], std::abs(p.a_parallel_hz), 0.02e6);
  EXPECT_NEAR(distinct[2] - distinct[1], std::abs(p.a_parallel_hz), 0.02e6);
  EXPECT_NEAR(distinct[1], p.zero_field_hz, 0.05e6);
}

TEST(OdmrTransitions, AxialFieldSplitsBranchesByTwiceZeeman) {
  GroundSpinParams p;
  const auto set = odmr_transitions(p, FieldVector{1.0, 0.0});
  double plus = 0.0, minus = 0.0;
  int np = 0, nm = 0;
  for (const auto& l : set.lines) {
    if (l.branch == SpinBranch::kPlusOne) plus += l.frequency_hz, ++np;
    if (l.branch == SpinBranch::kMinusOne) minus += l.frequency_hz, ++nm;
  }
  ASSERT_EQ(np, 3);
  ASSERT_EQ(nm, 3);
  EXPECT_NEAR(plus / np - minus / nm, 56e6, 0.01e6);
}

TEST(OdmrTransitions, SortedPositiveAndAxiallySymmetric) {
  GroundSpinParams p;
  const auto a = odmr_transitions(p, FieldVector{0.7, 39.0});
  ASSERT_EQ(a.lines.size(), 6u);
  for (std::size_t i = 0; i < a.lines.size(); ++i) {
    EXPECT_GT(a.lines[i].frequency_hz, 0.0);
    if (i) EXPECT_LE(a.lines[i - 1].frequency_hz, a.lines[i].frequency_hz);
  }
  // theta and 180 - theta give the same spectrum.
  const auto b = odmr_transitions(p, FieldVector{0.7, 141.0});
  for (std::size_t i = 0; i < a.lines.size(); ++i) EXPECT_NEAR(a.lines[i].frequency_hz, b.lines[i].frequency_hz, 1.0);
}

TEST(InferField, RecoversDeepNvField) {
  GroundSpinParams p;
  const auto est = infer_field(odmr_transitions(p, FieldVector{0.7, 39.0}), p);
  EXPECT_NEAR(est.field.magnitude_mt, 0.7, 0.007);
  EXPECT_NEAR(est.field.theta_deg, 39.0, 0.39);
  EXPECT_TRUE(est.theta_defined);
}

TEST(InferField, RoundTripsOverFieldGrid) {
  GroundSpinParams p;
  for (double b : {0.1, 0.7, 2.0, 5.0})
    for (double th : {0.0, 20.0, 39.0, 80.0}) {
      const auto est = infer_field(odmr_transitions(p, FieldVector{b, th}), p);
      EXPECT_NEAR(est.field.magnitude_mt, b, 0.01 * b) << b << " mT, " << th << " deg";
      EXPECT_NEAR(est.field.theta_deg, th, std::max(0.01 * th, 0.05)) << b << " mT, " << th << " deg";
    }
}

TEST(InferField, ReportsThetaFolded) {
  GroundSpinParams p;
  const auto est = infer_field(odmr_transitions(p, FieldVector{1.2, 130.0}), p);
  EXPECT_NEAR(est.field.theta_deg, 50.0, 0.5);
}

TEST(InferField, ZeroFieldFlagsThetaUndefined) {
  GroundSpinParams p;
  const auto est = infer_field(odmr_transitions(p, FieldVector{0.0, 0.0}), p);
  EXPECT_LT(est.field.magnitude_mt, 0.02);
  EXPECT_FALSE(est.theta_defined);
}

TEST(InferField, FewerThanTwoLinesIsUnderdetermined) {
  GroundSpinParams p;
  OdmrLineSet one;
  one.lines.push_back({2.87e9, SpinBranch::kPlusOne, 1.0});
  EXPECT_THROW(infer_field(one, p), InvalidArgument);
}

TEST(InferField, UnfittableLinesSignalNonConvergence) {
  GroundSpinParams p;
  OdmrLineSet lines;
  lines.lines.push_back({1.0e9, SpinBranch::kMinusOne, 1.0});
  lines.lines.push_back({4.5e9, SpinBranch::kPlusOne, 1.0});
  lines.lines.push_back({4.6e9, SpinBranch::kPlusOne, 1.0});
  EXPECT_THROW(infer_field(lines, p), ConvergenceError);
}

TEST(GroundParams, RejectInvalidValues) {
  GroundSpinParams p;
  p.zero_field_hz = -1.0;
  EXPECT_THROW(p.validate(), InvalidArgument);
  EXPECT_THROW(FieldVector({-1.0, 0.0}).validate(), InvalidArgument);
  EXPECT_THROW(FieldVector({1.0, 181.0}).validate(), InvalidArgument);
}

}  // namespace
}  // namespace nvreadout
