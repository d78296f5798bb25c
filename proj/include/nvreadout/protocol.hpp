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

// Readout protocol accounting: the path model that maps initialization,
// microwave and readout errors to as-measured errors, its inversion, the
// fidelity/SNR figures, the repetition-time speed-up model, and a Monte Carlo
// replay of the protocol through the photon-count models.

#ifndef NVREADOUT_PROTOCOL_HPP
#define NVREADOUT_PROTOCOL_HPP

#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "nvreadout/photon_statistics.hpp"

namespace nvreadout {

/// All entries are probabilities. e0: spin |0> is not ionized; e1: spin
/// |+-1> is ionized (both include the charge-readout step).
struct ProtocolErrorBudget {
  double e_nv0 = 0.0;
  double p_minus1 = 0.0;
  double p_plus1 = 1.0;
  double e_mw = 0.0;
  double e0 = 0.0;
  double e1 = 0.0;

  double p_zero() const { return 1.0 - p_minus1 - p_plus1; }
  /// Throws InvalidArgument.
  void validate() const;
};

struct MeasuredErrors {
  double e0_meas = 0.0;  ///< high counts although |0> was prepared
  double e1_meas = 0.0;  ///< low counts although |+1> was prepared
};

/// `flip_probability` replaces 1 - E_MW on the |0>-preparation branch; a
/// Rabi sweep uses sin^2(theta/2). The |+1> branch applies no pulse.
MeasuredErrors forward_error_model(const ProtocolErrorBudget& budget,
                                   std::optional<double> flip_probability = std::nullopt);

/// Fraction of repetitions above threshold after a pulse with the given
/// flip probability, starting from the initialized spin state.
double high_count_fraction(const ProtocolErrorBudget& budget, double flip_probability);

struct IntrinsicErrors {
  double e0 = 0.0;
  double e1 = 0.0;
};

/// Solves the two path equations for (e0, e1) using the initialization and
/// MW entries of `budget` (its e0/e1 are ignored). Throws
/// SingularSystemError when the system is singular.
IntrinsicErrors invert_error_model(const MeasuredErrors& measured, const ProtocolErrorBudget& budget);

/// Returned when both errors vanish.
inline constexpr double kInfiniteSnr = std::numeric_limits<double>::infinity();

struct FidelitySnr {
  double fidelity = 0.0;
  double snr = 0.0;
};

/// F = 1 - (e0 + e1)/2 and the thresholding SNR. SNR is reported as a
/// magnitude: e0 + e1 > 1 is the same discriminator with labels swapped.
FidelitySnr fidelity_and_snr(double e0, double e1);

/// Repetitions needed to reach an average SNR of one.
std::uint64_t repetitions_for_snr(double snr);

inline constexpr double kSingleShotRepetition_s = 850e-6;
inline constexpr double kSingleShotOverheadOnly_s = 730e-6;

struct SensingTimingModel {
  double single_shot_overhead_s = kSingleShotRepetition_s;
  double conventional_rep_overhead_s = 1.5e-6;
  double readout_window_s = 250e-9;
  double contrast = 0.3;
  double f_sat_cps = 50e3;
  /// When set, the single-shot overhead is divided by the charge
  /// post-selection acceptance rate. Off by default.
  bool include_postselection = false;
  double postselection_acceptance = 1.0;

  void validate() const;
};

/// Contrast-limited SNR of one conventional readout repetition.
double conventional_snr(const SensingTimingModel& timing);

struct ReadoutMethod {
  double rep_overhead_s = 0.0;
  double snr = 0.0;
};

struct SpeedupPoint {
  double t_seq_s = 0.0;
  double conventional_time_s = 0.0;
  double single_shot_time_s = 0.0;
  double speedup = 0.0;
};

/// Total time to SNR one, N(snr) * (overhead + t_seq), for each method.
std::vector<SpeedupPoint> speedup_curve(const std::vector<double>& t_seq_s, const ReadoutMethod& conventional,
                                        const ReadoutMethod& single_shot);
std::vector<SpeedupPoint> speedup_curve(const std::vector<double>& t_seq_s, const SensingTimingModel& timing,
                                        double single_shot_snr);

/// Optional extra rows for a set of readout durations.
struct ReadoutDurationRow {
  double duration_s = 0.0;
  double e_nv0_no_postselection = 0.0;
  double e_nv0 = 0.0;
  int threshold = 0;
  double f_charge = 0.0;
  MeasuredErrors measured;
  double f_meas = 0.0;
  IntrinsicErrors intrinsic;
  double f_corrected = 0.0;
  double snr = 0.0;
};

struct FidelityReport {
  MeasuredErrors measured;
  double f_meas = 0.0;
  IntrinsicErrors intrinsic;
  double f_corrected = 0.0;
  double snr_single_shot = 0.0;
  std::vector<ReadoutDurationRow> duration_rows;
};

/// Inverts `measured` with the budget's initialization/MW part.
FidelityReport fidelity_report(const MeasuredErrors& measured, const ProtocolErrorBudget& budget);

struct MonteCarloResult {
  CountHistogram zero_preparation;  ///< MW pi pulse applied
  CountHistogram plus_preparation;  ///< no pulse
  MeasuredErrors measured;
  double f_meas = 0.0;
  double f_meas_sigma = 0.0;  ///< binomial standard error
  MeasuredErrors analytic;
  double f_meas_analytic = 0.0;
};

/// Replays `repetitions` protocol runs per preparation. Ionization
/// probabilities are chosen so that, after thresholding the NV-/NV0 count
/// models, the outcome probabilities equal budget.e0 and budget.e1. Throws
/// InvalidArgument when the budget cannot be produced by those models.
/// Runs that start in NV0 draw from the NV0 model, so they land above
/// threshold with that model's error_zero; the path model counts them as low.
MonteCarloResult end_to_end_mc(const ProtocolErrorBudget& budget, const CountModel& minus, const CountModel& zero,
                               int threshold, std::uint64_t repetitions, std::uint64_t seed);

}  // namespace nvreadout

#endif  // NVREADOUT_PROTOCOL_HPP
