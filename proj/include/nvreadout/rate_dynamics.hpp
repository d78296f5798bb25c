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

// Five-state classical rate model of optical pumping on a spin-|0>
// transition: populations (|0>, |+1>, |-1>, singlet, NV0) propagate through
// a column-stochastic transfer matrix once per time bin, microwave pi pulses
// act as partial swaps, and the fluorescence of each bin is
// f0 * n0 + f1 * (n+1 + n-1).

#ifndef NVREADOUT_RATE_DYNAMICS_HPP
#define NVREADOUT_RATE_DYNAMICS_HPP

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace nvreadout {

enum RateState : std::size_t { kSpin0 = 0, kSpinPlus = 1, kSpinMinus = 2, kSinglet = 3, kNv0 = 4 };
inline constexpr std::size_t kNumRateStates = 5;

struct PopulationState {
  std::array<double, kNumRateStates> n{1.0, 0.0, 0.0, 0.0, 0.0};

  static PopulationState spin_mixture(double n0, double n_plus, double n_minus);
  double sum() const;
  /// Throws InvalidArgument unless every entry is in [-tol, 1 + tol] and
  /// the entries sum to 1 within tol.
  void validate(double tol = 1e-9) const;
};

using TransferMatrix = Eigen::Matrix<double, 5, 5>;

/// p = 1 - exp(-binwidth / T). T = +inf gives 0.
double probability_from_lifetime(double lifetime_s, double binwidth_s);
/// T = -binwidth / ln(1 - p). p = 0 gives +inf.
double lifetime_from_probability(double p, double binwidth_s);

struct OpticalPumpParams {
  double p_st0 = 0.0;   // |0> -> singlet per bin
  double p_st1 = 0.0;   // |+-1> -> singlet per bin
  double p_ts = 0.0;    // singlet -> triplet per bin
  double p_ion = 0.0;   // NV- -> NV0 per bin
  /// NV0 -> NV- per bin, split equally over the three spin states. Not part
  /// of the reference model; leave at 0 unless exploring.
  double p_recombination = 0.0;
  double binwidth_s = 10e-9;

  static OpticalPumpParams from_lifetimes(double t_st0_s, double t_st1_s, double t_ts_s, double t_ion_s,
                                          double binwidth_s = 10e-9);
  void validate() const;
};

struct FluorescenceParams {
  double f0_cps = 0.0;
  double f1_cps = 0.0;
  double fluor_loss1 = 0.0;
  double fluor_loss6 = 0.0;

  void validate() const;
};

/// Which fluorescence-loss factor scales a trace.
enum class LossGroup { kNone, kLoss1, kLoss6 };

/// Column-stochastic optical transfer matrix.
TransferMatrix build_transfer_optical(const OpticalPumpParams& p);

/// Transfer matrix of a dark interval: only singlet decay acts.
TransferMatrix build_transfer_dark(const OpticalPumpParams& p);

/// Swap of |0> and the target level with flip probability q.
/// A pi pulse with error E_MW has q = 1 - E_MW; a rotation by angle theta
/// has q = sin^2(theta / 2).
TransferMatrix build_transfer_mw(int target, double q);

PopulationState apply_mw_pi(const PopulationState& n, int target, double e_mw);
PopulationState apply_mw_rotation(const PopulationState& n, int target, double q);
double flip_probability(double rotation_angle_rad);

namespace segment {
struct OpticalPump {
  double duration_s = 0.0;
};
struct MwPi {
  int target = +1;
  /// Negative means "use the timeline's default error".
  double error = -1.0;
};
struct GreenInit {
  PopulationState reset_to;
};
struct Wait {
  double duration_s = 0.0;
};
}  // namespace segment

using Segment = std::variant<segment::OpticalPump, segment::MwPi, segment::GreenInit, segment::Wait>;

struct PulseTimeline {
  std::vector<Segment> segments;
  double default_mw_error = 0.0;

  void validate() const;
};

/// Green reset followed by `repeats` x {optical pump, pi pulse on |-1>}.
PulseTimeline spin_init_timeline(const PopulationState& green_mixture, int repeats, double pump_duration_s,
                                 double e_mw);

struct FluorescenceTrace {
  std::vector<double> time_s;  // start of each optical bin on the timeline clock
  std::vector<double> rate_cps;

  /// Expected photons: sum of rate * binwidth.
  double expected_photons(double binwidth_s) const;
};

struct TimelineResult {
  FluorescenceTrace trace;
  PopulationState final_state;
  /// Most negative population seen (0 when none went below zero).
  double min_population = 0.0;
};

TimelineResult simulate_timeline(const PulseTimeline& timeline, const OpticalPumpParams& pump,
                                 const FluorescenceParams& fl, const PopulationState& init,
                                 LossGroup group = LossGroup::kNone);

/// Number of bins covering `duration_s`; throws if not a positive integer
/// multiple of the binwidth (within 1e-6 of a bin).
std::size_t bins_for(double duration_s, double binwidth_s);

// ---------------------------------------------------------------------------
// Global fit over the 12-trace optical-pumping bundle.

enum class MwVariant { kNone = 0, kPiPlus = 1, kPiMinus = 2, kPiPlusPiPlus = 3 };
inline constexpr int kNumFamilies = 3;
inline constexpr int kNumVariants = 4;

std::string_view variant_label(MwVariant v);
MwVariant parse_variant_label(std::string_view label);

struct LabeledTrace {
  int family = 0;  // 0, 1, 2 = initialization a/b/c (or d/e/f)
  MwVariant variant = MwVariant::kNone;
  std::vector<double> rate_cps;
};

struct TraceBundle {
  double binwidth_s = 10e-9;
  std::vector<LabeledTrace> traces;
};

struct RateModel {
  OpticalPumpParams pump;
  FluorescenceParams fluorescence;
  double e_mw = 0.0;
  std::array<std::array<double, 3>, kNumFamilies> populations{};  // (n0, n+, n-) per family
};

/// Loss group of a family: none for the first, loss1 for the second, loss6
/// for the third.
LossGroup family_loss_group(int family);

/// Level whose population defines the spin fidelity of a family: |0> for
/// the first family, |+1> for the others.
RateState family_target(int family);

/// Model trace for one family and MW variant (optical pumping for `bins`).
std::vector<double> model_trace(const RateModel& model, int family, MwVariant variant, std::size_t bins);

/// Full 12-trace bundle from a model.
TraceBundle synthesize_bundle(const RateModel& model, std::size_t bins);

struct GlobalFitOptions {
  /// Keep p_ion fixed at the starting value.
  bool fix_ionization = false;
  int max_iterations = 500;
  double relative_cost_tolerance = 1e-9;
};

struct GlobalFitResult {
  RateModel model;
  /// 1-sigma uncertainties, same layout as `model` (rates as lifetimes).
  struct Sigma {
    double t_st0_s = 0, t_st1_s = 0, t_ts_s = 0, t_ion_s = 0;
    double f0_cps = 0, f1_cps = 0, e_mw = 0, fluor_loss1 = 0, fluor_loss6 = 0;
    std::array<std::array<double, 3>, kNumFamilies> populations{};
  } sigma;
  std::array<double, kNumFamilies> spin_fidelity{};
  double r_squared = 0.0;
  int iterations = 0;
};

/// Nonlinear least squares over shared rates, f0, f1, E_MW, loss factors and
/// two free spin populations per family, starting from `start`.
/// Throws SingularSystemError if a family has no traces and ConvergenceError
/// if the iteration limit is hit.
GlobalFitResult global_fit(const TraceBundle& bundle, const RateModel& start, const GlobalFitOptions& options = {});

}  // namespace nvreadout

#endif  // NVREADOUT_RATE_DYNAMICS_HPP
