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

// Photon-count statistics: histograms, Poisson and truncated Gaussian-mixture
// count models, charge-state threshold selection, seeded Monte Carlo
// sampling, and the saturation and lineshape fits.

#ifndef NVREADOUT_PHOTON_STATISTICS_HPP
#define NVREADOUT_PHOTON_STATISTICS_HPP

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

namespace nvreadout {

/// counts[k] = number of repetitions that detected k photons.
struct CountHistogram {
  std::vector<std::uint64_t> counts;
  std::uint64_t total = 0;
  double window_s = 0.0;

  static CountHistogram from_counts(std::vector<std::uint64_t> counts, double window_s = 0.0);
  /// Throws DataError if the occurrences do not add up to `total`.
  void validate() const;
  std::vector<double> frequencies() const;
  double mean() const;
  int max_count() const;
};

struct PoissonModel {
  double lambda = 0.0;
};

/// Component amplitudes are peak heights in fraction-of-events per integer
/// bin, as a histogram is displayed. The distribution is the sum evaluated
/// on k = 0, 1, 2, ... and renormalized to unit mass.
struct GaussianComponent {
  double amplitude = 0.0;
  double mean = 0.0;
  double sd = 1.0;
};

struct GaussianMixtureModel {
  std::vector<GaussianComponent> components;

  /// Unnormalized sum of components at k.
  double raw(double k) const;
};

/// Explicit probabilities p[k]; renormalized on use.
struct TabulatedModel {
  std::vector<double> p;
};

using CountModel = std::variant<PoissonModel, GaussianMixtureModel, TabulatedModel>;

/// Normalized pmf on 0..N, where N is large enough that the neglected tail
/// is below `tail`. Throws InvalidArgument for invalid models.
std::vector<double> pmf_table(const CountModel& model, double tail = 1e-15);

/// Counts >= threshold are assigned NV-.
struct ChargeDiscriminator {
  int threshold = 0;
  bool is_negative(int count) const { return count >= threshold; }
};

struct ThresholdResult {
  ChargeDiscriminator discriminator;
  double error_minus = 0.0;  // P(count < t | NV-)
  double error_zero = 0.0;   // P(count >= t | NV0)
};

/// Exhaustive search over t in [0, N + 1]; ties go to the smaller t.
ThresholdResult optimize_threshold(const CountModel& minus, const CountModel& zero);

/// Error rates of a fixed threshold.
ThresholdResult threshold_errors(const CountModel& minus, const CountModel& zero, int threshold);

/// 1 - (error_minus + error_zero) / 2.
double charge_fidelity(double error_minus, double error_zero);

enum class CountModelKind { kPoisson, kGaussianMixture };

struct CountFitResult {
  CountModel model;
  double r_squared = 0.0;
  /// Standard errors: lambda for Poisson; (amplitude, mean, sd) per
  /// component for mixtures.
  std::vector<double> standard_errors;
  /// Mixture components whose amplitude collapsed to ~0.
  std::vector<std::size_t> degenerate_components;
};

/// Poisson: maximum likelihood (lambda = sample mean). Mixture of
/// `components` Gaussians: least squares on the histogram frequencies with
/// three starting points. Requires total >= 100.
CountFitResult fit_count_model(const CountHistogram& hist, CountModelKind kind, int components = 2);

/// Repetitions per independently seeded chunk in sample_histogram.
inline constexpr std::uint64_t kSampleChunk = 65536;

/// Draws `repetitions` counts by inverse-CDF lookup. Chunk c of
/// kSampleChunk repetitions uses seed derive_subseed(seed, c), so the
/// result does not depend on how chunks are scheduled over threads.
CountHistogram sample_histogram(const CountModel& model, std::uint64_t repetitions, std::uint64_t seed,
                                double window_s = 0.0);

/// Draws one count from a cumulative table (as built from pmf_table).
int draw_count(const std::vector<double>& cdf, double u);
std::vector<double> cumulative(const std::vector<double>& pmf);

struct SaturationPoint {
  double power = 0.0;
  double rate_cps = 0.0;
};

struct SaturationFit {
  double a = 0.0;           // cps per power unit
  double i_sat = 0.0;       // power units
  double f_sat_cps = 0.0;   // a * i_sat
  double sigma_a = 0.0, sigma_i_sat = 0.0, sigma_f_sat_cps = 0.0;
  double r_squared = 0.0;
  /// False when the data do not constrain I_sat (relative uncertainty > 1
  /// or I_sat pinned at its upper search bound).
  bool saturating = true;
};

/// f = A * I * I_sat / (I + I_sat). Needs >= 3 points with >= 3 distinct
/// powers.
SaturationFit fit_saturation(const std::vector<SaturationPoint>& points);

struct PeakFit {
  double amplitude = 0.0, center = 0.0, width = 0.0, offset = 0.0;
  double fwhm = 0.0;
  double r_squared = 0.0;
  bool converged = false;
  std::string message;
};

struct LineshapeFit {
  PeakFit gaussian;    // width = sigma
  PeakFit lorentzian;  // width = half width at half maximum
};

/// Fits offset + Gaussian and offset + Lorentzian peaks to (x, y) samples
/// (>= 10). Each shape is flagged independently when it fails.
LineshapeFit fit_lineshape(const std::vector<double>& x, const std::vector<double>& y);

inline double gaussian_fwhm(double sigma) { return 2.0 * std::sqrt(2.0 * std::log(2.0)) * sigma; }

}  // namespace nvreadout

#endif  // NVREADOUT_PHOTON_STATISTICS_HPP
