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

#include "nvreadout/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <thread>

#include "nvreadout/errors.hpp"
#include "nvreadout/rng.hpp"

namespace nvreadout {

namespace {

bool is_probability(double p) { return p >= 0.0 && p <= 1.0; }

void require_probability(double p, const char* what) {
  if (!is_probability(p)) throw InvalidArgument(std::string(what) + " must lie in [0, 1]");
}

}  // namespace

void ProtocolErrorBudget::validate() const {
  require_probability(e_nv0, "E_NV0");
  require_probability(p_minus1, "P_-1");
  require_probability(p_plus1, "P_+1");
  require_probability(e_mw, "E_MW");
  require_probability(e0, "E0");
  require_probability(e1, "E1");
  if (p_minus1 + p_plus1 > 1.0 + 1e-12) throw InvalidArgument("P_-1 + P_+1 must not exceed 1");
}

MeasuredErrors forward_error_model(const ProtocolErrorBudget& b, std::optional<double> flip_probability) {
  b.validate();
  const double q = flip_probability.value_or(1.0 - b.e_mw);
  require_probability(q, "flip probability");
  const double n = 1.0 - b.e_nv0, p0 = std::max(b.p_zero(), 0.0);
  MeasuredErrors m;
  m.e0_meas = n * b.p_minus1 * (1.0 - b.e1) + n * b.p_plus1 * (1.0 - q) * (1.0 - b.e1) + n * b.p_plus1 * q * b.e0 +
              n * p0 * q * (1.0 - b.e1) + n * p0 * (1.0 - q) * b.e0;
  m.e1_meas = n * b.p_minus1 * b.e1 + n * b.p_plus1 * b.e1 + n * p0 * (1.0 - b.e0) + b.e_nv0;
  return m;
}

double high_count_fraction(const ProtocolErrorBudget& budget, double flip_probability) {
  return forward_error_model(budget, flip_probability).e0_meas;
}

IntrinsicErrors invert_error_model(const MeasuredErrors& measured, const ProtocolErrorBudget& b) {
  ProtocolErrorBudget init = b;
  init.e0 = init.e1 = 0.0;
  init.validate();
  if (!std::isfinite(measured.e0_meas) || !std::isfinite(measured.e1_meas))
    throw InvalidArgument("measured errors must be finite");
  // Solved in extended precision: near-singular budgets amplify rounding by
  // the condition number.
  using real = long double;
  const real n = 1.0L - b.e_nv0, p0 = std::max(b.p_zero(), 0.0), q = 1.0L - b.e_mw;
  // e0_meas = u (1 - e1) + v e0 ;  e1_meas = n p0 (1 - e0) + w e1 + E_NV0
  const real u = n * (b.p_minus1 + b.p_plus1 * (1.0L - q) + p0 * q);
  const real v = n * (b.p_plus1 * q + p0 * (1.0L - q));
  const real w = n * (real(b.p_minus1) + b.p_plus1);
  const real a11 = v, a12 = -u, a21 = -n * p0, a22 = w;
  const real r1 = measured.e0_meas - u, r2 = measured.e1_meas - n * p0 - b.e_nv0;
  const real det = a11 * a22 - a12 * a21;
  const real scale = std::max({std::abs(a11 * a22), std::abs(a12 * a21), real(1e-300)});
  if (!(std::abs(det) > 1e-12L * scale) || det == 0.0L)
    throw SingularSystemError("error-model inversion: path equations are singular for this budget");
  return {static_cast<double>((r1 * a22 - a12 * r2) / det), static_cast<double>((a11 * r2 - a21 * r1) / det)};
}

FidelitySnr fidelity_and_snr(double e0, double e1) {
  require_probability(e0, "E0");
  require_probability(e1, "E1");
  FidelitySnr r;
  r.fidelity = 1.0 - (e0 + e1) / 2.0;
  const double num = std::abs(1.0 - e1 - e0);
  const double den = std::sqrt((1.0 - e1) * e1 + (1.0 - e0) * e0);
  if (den == 0.0) r.snr = num == 0.0 ? 0.0 : kInfiniteSnr;
  else r.snr = num / den;
  return r;
}

std::uint64_t repetitions_for_snr(double snr) {
  if (!(snr > 0.0)) throw InvalidArgument("repetitions_for_snr: SNR must be > 0");
  if (snr >= 1.0) return 1;
  return static_cast<std::uint64_t>(std::ceil(1.0 / (snr * snr)));
}

void SensingTimingModel::validate() const {
  if (!(single_shot_overhead_s > 0.0) || !(conventional_rep_overhead_s > 0.0) || !(readout_window_s > 0.0) ||
      !(contrast > 0.0) || !(f_sat_cps > 0.0))
    throw InvalidArgument("SensingTimingModel: all timing entries must be positive");
  if (!(contrast <= 1.0)) throw InvalidArgument("SensingTimingModel: contrast must not exceed 1");
  if (!(postselection_acceptance > 0.0 && postselection_acceptance <= 1.0))
    throw InvalidArgument("SensingTimingModel: acceptance must lie in (0, 1]");
}

double conventional_snr(const SensingTimingModel& t) {
  t.validate();
  const double ph = t.f_sat_cps * t.readout_window_s;
  const double dark = (1.0 - t.contrast) * ph;
  return (ph - dark) / std::sqrt(ph + dark);
}

std::vector<SpeedupPoint> speedup_curve(const std::vector<double>& t_seq_s, const ReadoutMethod& conventional,
                                        const ReadoutMethod& single_shot) {
  if (!(conventional.rep_overhead_s >= 0.0) || !(single_shot.rep_overhead_s >= 0.0))
    throw InvalidArgument("speedup_curve: overheads must be >= 0");
  const auto n_conv = static_cast<double>(repetitions_for_snr(conventional.snr));
  const auto n_ss = static_cast<double>(repetitions_for_snr(single_shot.snr));
  std::vector<SpeedupPoint> out;
  out.reserve(t_seq_s.size());
  for (double t : t_seq_s) {
    if (!(t >= 0.0) || !std::isfinite(t)) throw InvalidArgument("speedup_curve: sequence lengths must be >= 0");
    SpeedupPoint p;
    p.t_seq_s = t;
    p.conventional_time_s = n_conv * (conventional.rep_overhead_s + t);
    p.single_shot_time_s = n_ss * (single_shot.rep_overhead_s + t);
    p.speedup = p.conventional_time_s / p.single_shot_time_s;
    out.push_back(p);
  }
  return out;
}

std::vector<SpeedupPoint> speedup_curve(const std::vector<double>& t_seq_s, const SensingTimingModel& timing,
                                        double single_shot_snr) {
  timing.validate();
  double overhead = timing.single_shot_overhead_s;
  if (timing.include_postselection) overhead /= timing.postselection_acceptance;
  return speedup_curve(t_seq_s, ReadoutMethod{timing.conventional_rep_overhead_s, conventional_snr(timing)},
                       ReadoutMethod{overhead, single_shot_snr});
}

FidelityReport fidelity_report(const MeasuredErrors& measured, const ProtocolErrorBudget& budget) {
  FidelityReport r;
  r.measured = measured;
  r.f_meas = 1.0 - (measured.e0_meas + measured.e1_meas) / 2.0;
  r.intrinsic = invert_error_model(measured, budget);
  const double e0 = std::clamp(r.intrinsic.e0, 0.0, 1.0), e1 = std::clamp(r.intrinsic.e1, 0.0, 1.0);
  r.f_corrected = 1.0 - (r.intrinsic.e0 + r.intrinsic.e1) / 2.0;
  r.snr_single_shot = fidelity_and_snr(e0, e1).snr;
  return r;
}

// ---------------------------------------------------------------------------

MonteCarloResult end_to_end_mc(const ProtocolErrorBudget& b, const CountModel& minus, const CountModel& zero,
                               int threshold, std::uint64_t repetitions, std::uint64_t seed) {
  b.validate();
  if (repetitions < 1) throw InvalidArgument("end_to_end_mc: repetitions must be >= 1");
  if (threshold < 0) throw InvalidArgument("end_to_end_mc: threshold must be >= 0");
  const ThresholdResult charge = threshold_errors(minus, zero, threshold);
  const double e_m = charge.error_minus, e_z = charge.error_zero;
  const double span = 1.0 - e_m - e_z;
  if (!(span > 0.0)) throw InvalidArgument("end_to_end_mc: count models are not separated by the threshold");
  // P(high | spin 0) = (1 - i0)(1 - e_m) + i0 e_z = e0
  // P(high | spin +-1) = (1 - i1)(1 - e_m) + i1 e_z = 1 - e1
  const double i0 = (1.0 - e_m - b.e0) / span;
  const double i1 = (b.e1 - e_m) / span;
  if (!is_probability(i0) || !is_probability(i1))
    throw InvalidArgument("end_to_end_mc: E0/E1 are not reachable with these count models and threshold");

  const auto cdf_minus = cumulative(pmf_table(minus));
  const auto cdf_zero = cumulative(pmf_table(zero));
  const double q = 1.0 - b.e_mw;
  const std::uint64_t chunks = (repetitions + kSampleChunk - 1) / kSampleChunk;
  const std::uint64_t jobs = 2 * chunks;  // job = 2 * chunk + preparation
  const std::size_t bins = std::max(cdf_minus.size(), cdf_zero.size());
  const unsigned workers =
      static_cast<unsigned>(std::min<std::uint64_t>(jobs, std::max(1u, std::thread::hardware_concurrency())));
  std::vector<std::vector<std::uint64_t>> partial(2 * workers, std::vector<std::uint64_t>(bins, 0));

  auto work = [&](unsigned w) {
    for (std::uint64_t job = w; job < jobs; job += workers) {
      const std::uint64_t chunk = job / 2;
      const bool pulse = job % 2 == 0;
      auto& hist = partial[2 * w + (pulse ? 0 : 1)];
      Rng rng(derive_subseed(seed, job));
      const std::uint64_t n = std::min(kSampleChunk, repetitions - chunk * kSampleChunk);
      for (std::uint64_t i = 0; i < n; ++i) {
        bool neutral = rng.uniform() < b.e_nv0;
        if (!neutral) {
          const double us = rng.uniform();
          int spin = us < b.p_minus1 ? -1 : (us < b.p_minus1 + b.p_plus1 ? 1 : 0);
          if (pulse && spin != -1 && rng.uniform() < q) spin = spin == 0 ? 1 : 0;
          neutral = rng.uniform() < (spin == 0 ? i0 : i1);
        }
        const int k = draw_count(neutral ? cdf_zero : cdf_minus, rng.uniform());
        ++hist[static_cast<std::size_t>(k)];
      }
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> threads;
    for (unsigned w = 0; w < workers; ++w) threads.emplace_back(work, w);
    for (auto& t : threads) t.join();
  }

  auto merged = [&](int prep) {
    std::vector<std::uint64_t> counts(bins, 0);
    for (unsigned w = 0; w < workers; ++w)
      for (std::size_t k = 0; k < bins; ++k) counts[k] += partial[2 * w + prep][k];
    while (counts.size() > 1 && counts.back() == 0) counts.pop_back();
    return CountHistogram::from_counts(std::move(counts));
  };
  MonteCarloResult r;
  r.zero_preparation = merged(0);
  r.plus_preparation = merged(1);
  auto above = [&](const CountHistogram& h) {
    std::uint64_t s = 0;
    for (std::size_t k = static_cast<std::size_t>(threshold); k < h.counts.size(); ++k) s += h.counts[k];
    return static_cast<double>(s) / static_cast<double>(h.total);
  };
  r.measured.e0_meas = above(r.zero_preparation);
  r.measured.e1_meas = 1.0 - above(r.plus_preparation);
  r.f_meas = 1.0 - (r.measured.e0_meas + r.measured.e1_meas) / 2.0;
  const double nn = static_cast<double>(repetitions);
  r.f_meas_sigma = 0.5 * std::sqrt(r.measured.e0_meas * (1.0 - r.measured.e0_meas) / nn +
                                   r.measured.e1_meas * (1.0 - r.measured.e1_meas) / nn);
  r.analytic = forward_error_model(b);
  r.f_meas_analytic = 1.0 - (r.analytic.e0_meas + r.analytic.e1_meas) / 2.0;
  return r;
}

}  // namespace nvreadout
