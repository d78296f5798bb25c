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

#include "nvreadout/rate_dynamics.hpp"

#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "nvreadout/errors.hpp"
#include "nvreadout/rng.hpp"

namespace nvreadout {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

RateModel deep_model() {
  RateModel m;
  m.pump = OpticalPumpParams::from_lifetimes(4.1e-6, 0.4e-3, 1.33e-6, kInf);
  m.fluorescence = {31.7e3, 0.2e3, 0.205, 0.219};
  m.e_mw = 0.056;
  m.populations = {{{0.704, 0.134, 0.162}, {0.148, 0.451, 0.401}, {0.0, 0.879, 0.121}}};
  return m;
}

RateModel shallow_model() {
  RateModel m;
  m.pump = OpticalPumpParams::from_lifetimes(7.0e-6, 1.0e-3, 11.3e-6, 0.2e-3);
  m.fluorescence = {17.5e3, 3.6e3, 0.151, 0.300};
  m.e_mw = 0.051;
  m.populations = {{{0.704, 0.097, 0.199}, {0.189, 0.421, 0.390}, {0.069, 0.700, 0.231}}};
  return m;
}

// Per-bin rate equations written out longhand.
std::vector<double> oracle_trace(const OpticalPumpParams& p, double f0, double f1, std::array<double, 5> n,
                                 std::size_t bins) {
  std::vector<double> out;
  for (std::size_t b = 0; b < bins; ++b) {
    out.push_back(f0 * n[0] + f1 * (n[1] + n[2]));
    const double s = n[3];
    std::array<double, 5> next;
    next[0] = n[0] * (1 - p.p_st0 - p.p_ion) + 0.5 * p.p_ts * s;
    next[1] = n[1] * (1 - p.p_st1 - p.p_ion) + 0.25 * p.p_ts * s;
    next[2] = n[2] * (1 - p.p_st1 - p.p_ion) + 0.25 * p.p_ts * s;
    next[3] = s * (1 - p.p_ts) + p.p_st0 * n[0] + p.p_st1 * (n[1] + n[2]);
    next[4] = n[4] + p.p_ion * (n[0] + n[1] + n[2]);
    n = next;
  }
  return out;
}

TEST(Lifetimes, ProbabilityRoundTrip) {
  for (double t : {1e-8, 1.33e-6, 4.1e-6, 0.4e-3, 2.0}) {
    const double p = probability_from_lifetime(t, 10e-9);
    EXPECT_GE(p, 0.0);
    EXPECT_LT(p, 1.0);
    EXPECT_NEAR(lifetime_from_probability(p, 10e-9), t, 1e-9 * t);
  }
  EXPECT_EQ(probability_from_lifetime(kInf, 10e-9), 0.0);
  EXPECT_EQ(lifetime_from_probability(0.0, 10e-9), kInf);
  EXPECT_THROW(probability_from_lifetime(-1.0, 10e-9), InvalidArgument);
  EXPECT_THROW(lifetime_from_probability(1.0, 10e-9), InvalidArgument);
}

TEST(TransferMatrix, ColumnsSumToOneAndEntriesAreProbabilities) {
  Rng rng(21);
  for (int i = 0; i < 500; ++i) {
    OpticalPumpParams p;
    p.p_st0 = 0.3 * rng.uniform();
    p.p_st1 = 0.3 * rng.uniform();
    p.p_ts = rng.uniform() * 0.99;
    p.p_ion = 0.3 * rng.uniform();
    p.p_recombination = i % 2 ? 0.1 * rng.uniform() : 0.0;
    for (const TransferMatrix& t : {build_transfer_optical(p), build_transfer_dark(p)}) {
      for (int c = 0; c < 5; ++c) {
        EXPECT_NEAR(t.col(c).sum(), 1.0, 1e-15);
        for (int r = 0; r < 5; ++r) {
          EXPECT_GE(t(r, c), 0.0);
          EXPECT_LE(t(r, c), 1.0);
        }
      }
    }
  }
}

TEST(TransferMatrix, RejectsExcessOutflow) {
  OpticalPumpParams p;
  p.p_st0 = 0.6;
  p.p_ion = 0.6;
  EXPECT_THROW(build_transfer_optical(p), InvalidArgument);
  p = {};
  p.p_ts = 1.0;
  EXPECT_THROW(p.validate(), InvalidArgument);
}

TEST(MicrowaveFlip, EndpointsAreSwapAndIdentity) {
  const PopulationState s = PopulationState::spin_mixture(0.6, 0.3, 0.1);
  const auto swapped = apply_mw_rotation(s, +1, 1.0);
  EXPECT_DOUBLE_EQ(swapped.n[kSpin0], 0.3);
  EXPECT_DOUBLE_EQ(swapped.n[kSpinPlus], 0.6);
  EXPECT_DOUBLE_EQ(swapped.n[kSpinMinus], 0.1);
  const auto same = apply_mw_rotation(s, -1, 0.0);
  for (std::size_t k = 0; k < kNumRateStates; ++k) EXPECT_DOUBLE_EQ(same.n[k], s.n[k]);
  EXPECT_NEAR(flip_probability(std::acos(-1.0)), 1.0, 1e-15);
  EXPECT_NEAR(flip_probability(std::acos(-1.0) / 2.0), 0.5, 1e-15);
}

TEST(MicrowaveFlip, TwoImperfectPulsesMatchDoublePulseVariant) {
  const RateModel m = deep_model();
  for (int f = 0; f < kNumFamilies; ++f) {
    const auto& p = m.populations[f];
    PopulationState s = PopulationState::spin_mixture(p[0], p[1], p[2]);
    s = apply_mw_pi(apply_mw_pi(s, +1, m.e_mw), +1, m.e_mw);
    // Second pulse restores all but 2 q (1 - q) of the swapped weight.
    const double q = 1.0 - m.e_mw;
    EXPECT_NEAR(s.n[kSpin0], p[0] + 2 * q * (1 - q) * (p[1] - p[0]), 1e-15);
    const double scale = f == 0 ? 1.0 : (f == 1 ? 1 - m.fluorescence.fluor_loss1 : 1 - m.fluorescence.fluor_loss6);
    const auto oracle = oracle_trace(m.pump, m.fluorescence.f0_cps * scale, m.fluorescence.f1_cps * scale, s.n, 500);
    const auto trace = model_trace(m, f, MwVariant::kPiPlusPiPlus, 500);
    for (std::size_t b = 0; b < trace.size(); ++b) EXPECT_NEAR(trace[b], oracle[b], 1e-9 * oracle[0]);
  }
}

TEST(Propagation, MatchesLonghandRateEquations) {
  for (const RateModel& m : {deep_model(), shallow_model()}) {
    PulseTimeline tl;
    tl.segments = {segment::OpticalPump{20e-6}};
    const PopulationState init = PopulationState::spin_mixture(0.5, 0.3, 0.2);
    const auto r = simulate_timeline(tl, m.pump, m.fluorescence, init);
    const auto oracle = oracle_trace(m.pump, m.fluorescence.f0_cps, m.fluorescence.f1_cps, init.n, 2000);
    ASSERT_EQ(r.trace.rate_cps.size(), oracle.size());
    for (std::size_t b = 0; b < oracle.size(); ++b) EXPECT_NEAR(r.trace.rate_cps[b], oracle[b], 1e-9 * oracle[0]);
    EXPECT_DOUBLE_EQ(r.trace.time_s[1999], 1999 * 10e-9);
  }
}

TEST(Propagation, ConservesPopulationOverMillionSteps) {
  const RateModel m = shallow_model();
  PulseTimeline tl;
  tl.segments = {segment::OpticalPump{1e6 * 10e-9}};
  const auto r = simulate_timeline(tl, m.pump, m.fluorescence, PopulationState::spin_mixture(0.3, 0.3, 0.4));
  EXPECT_LE(std::abs(r.final_state.sum() - 1.0), 1e-12);
  EXPECT_GE(r.min_population, -1e-12);
}

TEST(Propagation, RandomTimelinesStayNormalizedAndNonNegative) {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    OpticalPumpParams p = OpticalPumpParams::from_lifetimes(1e-6 + 1e-5 * rng.uniform(), 1e-4 + 1e-3 * rng.uniform(),
                                                            1e-6 + 1e-5 * rng.uniform(), 1e-4 + 1e-2 * rng.uniform());
    PulseTimeline tl;
    tl.default_mw_error = 0.1 * rng.uniform();
    tl.segments.push_back(segment::GreenInit{PopulationState::spin_mixture(0.7, 0.15, 0.15)});
    for (int s = 0; s < 8; ++s) {
      const double u = rng.uniform();
      if (u < 0.4) tl.segments.push_back(segment::OpticalPump{(1 + int(100 * rng.uniform())) * 10e-9});
      else if (u < 0.7) tl.segments.push_back(segment::MwPi{rng.uniform() < 0.5 ? 1 : -1, -1.0});
      else tl.segments.push_back(segment::Wait{(1 + int(50 * rng.uniform())) * 10e-9});
    }
    const auto r = simulate_timeline(tl, p, FluorescenceParams{30e3, 5e3, 0, 0}, PopulationState{});
    EXPECT_LE(std::abs(r.final_state.sum() - 1.0), 1e-12);
    EXPECT_GE(r.min_population, -1e-12);
    for (double v : r.trace.rate_cps) EXPECT_GE(v, 0.0);
  }
}

TEST(Propagation, IonizationIsMonotone) {
  const RateModel m = shallow_model();
  const TransferMatrix t = build_transfer_optical(m.pump);
  Eigen::Matrix<double, 5, 1> v;
  v << 0.2, 0.5, 0.3, 0.0, 0.0;
  double prev = 0.0;
  for (int b = 0; b < 20000; ++b) {
    v = t * v;
    EXPECT_GE(v(kNv0), prev);
    prev = v(kNv0);
  }
  EXPECT_GT(prev, 0.0);
}

TEST(Propagation, DarkIntervalOnlyDrainsSinglet) {
  OpticalPumpParams p = OpticalPumpParams::from_lifetimes(4e-6, 4e-4, 1e-6, 1e-4);
  PopulationState init;
  init.n = {0.2, 0.2, 0.2, 0.4, 0.0};
  PulseTimeline tl;
  tl.segments = {segment::Wait{100e-6}};
  const auto r = simulate_timeline(tl, p, FluorescenceParams{}, init);
  EXPECT_TRUE(r.trace.rate_cps.empty());
  EXPECT_NEAR(r.final_state.n[kSinglet], 0.0, 1e-12);
  EXPECT_NEAR(r.final_state.n[kSpin0], 0.4, 1e-12);
  EXPECT_NEAR(r.final_state.n[kSpinPlus], 0.3, 1e-12);
  EXPECT_NEAR(r.final_state.n[kNv0], 0.0, 0.0);
}

TEST(Propagation, DeepPumpPulseEmitsAboutPointOneSevenPhotons) {
  const RateModel m = deep_model();
  PulseTimeline tl;
  tl.segments = {segment::OpticalPump{20e-6}};
  const auto r = simulate_timeline(tl, m.pump, m.fluorescence, PopulationState::spin_mixture(0.704, 0.134, 0.162));
  const double photons = r.trace.expected_photons(10e-9);
  EXPECT_GT(photons, 0.17 / 2);
  EXPECT_LT(photons, 0.17 * 2);
}

TEST(Timeline, SpinInitStructure) {
  const auto tl = spin_init_timeline(PopulationState::spin_mixture(0.7, 0.15, 0.15), 3, 20e-6, 0.05);
  ASSERT_EQ(tl.segments.size(), 7u);
  EXPECT_TRUE(std::holds_alternative<segment::GreenInit>(tl.segments[0]));
  EXPECT_TRUE(std::holds_alternative<segment::OpticalPump>(tl.segments[1]));
  EXPECT_EQ(std::get<segment::MwPi>(tl.segments[2]).target, -1);
  // Pumping empties |0> and each -1 -> 0 swap feeds it again, so weight
  // accumulates in +1.
  const RateModel m = deep_model();
  const auto r = simulate_timeline(tl, m.pump, m.fluorescence, PopulationState{});
  EXPECT_GT(r.final_state.n[kSpinPlus], 0.7);
  EXPECT_LT(r.final_state.n[kSpin0], 0.2);
}

TEST(Timeline, ValidationErrors) {
  PulseTimeline empty;
  EXPECT_THROW(empty.validate(), InvalidArgument);
  PulseTimeline bad;
  bad.segments = {segment::OpticalPump{15e-9}};
  EXPECT_THROW(simulate_timeline(bad, OpticalPumpParams{}, FluorescenceParams{}, PopulationState{}), InvalidArgument);
  EXPECT_THROW(bins_for(0.0, 10e-9), InvalidArgument);
  EXPECT_EQ(bins_for(20e-6, 10e-9), 2000u);
  PopulationState s;
  s.n = {0.5, 0.6, 0.0, 0.0, 0.0};
  EXPECT_THROW(s.validate(), InvalidArgument);
  EXPECT_THROW(spin_init_timeline(PopulationState{}, -1, 1e-6, 0.0), InvalidArgument);
}

TEST(GlobalFit, NoiselessBundleFitsExactly) {
  const RateModel truth = deep_model();
  const auto bundle = synthesize_bundle(truth, 2000);
  ASSERT_EQ(bundle.traces.size(), 12u);
  RateModel start = truth;
  start.pump = OpticalPumpParams::from_lifetimes(5e-6, 1e-3, 2e-6, kInf);
  start.fluorescence = {25e3, 1e3, 0.1, 0.1};
  start.e_mw = 0.03;
  start.populations = {{{0.6, 0.2, 0.2}, {0.2, 0.4, 0.4}, {0.1, 0.8, 0.1}}};
  GlobalFitOptions o;
  o.fix_ionization = true;
  const auto fit = global_fit(bundle, start, o);
  EXPECT_GE(fit.r_squared, 0.9999);
  EXPECT_NEAR(lifetime_from_probability(fit.model.pump.p_st0, 10e-9), 4.1e-6, 0.01 * 4.1e-6);
  EXPECT_NEAR(fit.model.e_mw, 0.056, 0.002);
  for (int f = 0; f < kNumFamilies; ++f)
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(fit.model.populations[f][k], truth.populations[f][k], 0.005);
  EXPECT_NEAR(fit.spin_fidelity[0], (1.0 + 0.704) / 2.0, 0.003);
  EXPECT_NEAR(fit.spin_fidelity[2], (1.0 + 0.879) / 2.0, 0.003);
}

TEST(GlobalFit, MissingFamilyIsRankDeficient) {
  auto bundle = synthesize_bundle(deep_model(), 50);
  std::erase_if(bundle.traces, [](const LabeledTrace& t) { return t.family == 2; });
  EXPECT_THROW(global_fit(bundle, deep_model()), SingularSystemError);
  TraceBundle none;
  EXPECT_THROW(global_fit(none, deep_model()), DataError);
}

TEST(GlobalFit, IterationLimitSignalsNonConvergence) {
  const auto bundle = synthesize_bundle(deep_model(), 500);
  RateModel start = deep_model();
  start.pump = OpticalPumpParams::from_lifetimes(20e-6, 1e-4, 10e-6, kInf);
  GlobalFitOptions o;
  o.fix_ionization = true;
  o.max_iterations = 1;
  EXPECT_THROW(global_fit(bundle, start, o), ConvergenceError);
}

TEST(Labels, VariantRoundTrip) {
  for (int v = 0; v < kNumVariants; ++v)
    EXPECT_EQ(parse_variant_label(variant_label(static_cast<MwVariant>(v))), static_cast<MwVariant>(v));
  EXPECT_THROW(parse_variant_label("pi0"), DataError);
  EXPECT_EQ(family_target(0), kSpin0);
  EXPECT_EQ(family_target(2), kSpinPlus);
  EXPECT_EQ(family_loss_group(1), LossGroup::kLoss1);
}

}  // namespace
}  // namespace nvreadout
