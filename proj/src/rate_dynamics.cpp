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

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "nvreadout/errors.hpp"
#include "nvreadout/optimize.hpp"
#include "nvreadout/simd/kernels.hpp"

namespace nvreadout {

static_assert(kNumRateStates == simd::kRateStates);

PopulationState PopulationState::spin_mixture(double n0, double n_plus, double n_minus) {
  PopulationState s;
  s.n = {n0, n_plus, n_minus, 0.0, 0.0};
  return s;
}

double PopulationState::sum() const { return std::accumulate(n.begin(), n.end(), 0.0); }

void PopulationState::validate(double tol) const {
  for (double v : n)
    if (!std::isfinite(v) || v < -tol || v > 1.0 + tol)
      throw InvalidArgument("PopulationState: entries must lie in [0, 1]");
  if (std::abs(sum() - 1.0) > tol) throw InvalidArgument("PopulationState: entries must sum to 1");
}

double probability_from_lifetime(double lifetime_s, double binwidth_s) {
  if (!(binwidth_s > 0.0)) throw InvalidArgument("binwidth must be positive");
  if (!(lifetime_s > 0.0)) throw InvalidArgument("lifetime must be positive");
  if (std::isinf(lifetime_s)) return 0.0;
  return -std::expm1(-binwidth_s / lifetime_s);
}

double lifetime_from_probability(double p, double binwidth_s) {
  if (!(binwidth_s > 0.0)) throw InvalidArgument("binwidth must be positive");
  if (!(p >= 0.0 && p < 1.0)) throw InvalidArgument("probability must lie in [0, 1)");
  if (p == 0.0) return std::numeric_limits<double>::infinity();
  return -binwidth_s / std::log1p(-p);
}

OpticalPumpParams OpticalPumpParams::from_lifetimes(double t_st0_s, double t_st1_s, double t_ts_s,
                                                    double t_ion_s, double binwidth_s) {
  OpticalPumpParams p;
  p.binwidth_s = binwidth_s;
  p.p_st0 = probability_from_lifetime(t_st0_s, binwidth_s);
  p.p_st1 = probability_from_lifetime(t_st1_s, binwidth_s);
  p.p_ts = probability_from_lifetime(t_ts_s, binwidth_s);
  p.p_ion = probability_from_lifetime(t_ion_s, binwidth_s);
  return p;
}

void OpticalPumpParams::validate() const {
  for (double v : {p_st0, p_st1, p_ts, p_ion, p_recombination})
    if (!(v >= 0.0 && v < 1.0)) throw InvalidArgument("OpticalPumpParams: probabilities must lie in [0, 1)");
  if (!(binwidth_s > 0.0) || !std::isfinite(binwidth_s))
    throw InvalidArgument("OpticalPumpParams: binwidth must be positive");
  if (p_st0 + p_ion > 1.0 || p_st1 + p_ion > 1.0)
    throw InvalidArgument("OpticalPumpParams: outflow from a spin level exceeds 1");
}

void FluorescenceParams::validate() const {
  if (!(f0_cps >= 0.0) || !(f1_cps >= 0.0) || !std::isfinite(f0_cps) || !std::isfinite(f1_cps))
    throw InvalidArgument("FluorescenceParams: rates must be finite and >= 0");
  for (double v : {fluor_loss1, fluor_loss6})
    if (!(v >= 0.0 && v <= 1.0)) throw InvalidArgument("FluorescenceParams: losses must lie in [0, 1]");
}

namespace {

void complete_diagonal(TransferMatrix& t) {
  for (int c = 0; c < 5; ++c) {
    double off = 0.0;
    for (int r = 0; r < 5; ++r)
      if (r != c) off += t(r, c);
    if (off > 1.0) throw InvalidArgument("transfer matrix: column outflow exceeds 1");
    t(c, c) = 1.0 - off;
  }
}

double loss_scale(const FluorescenceParams& fl, LossGroup group) {
  switch (group) {
    case LossGroup::kLoss1: return 1.0 - fl.fluor_loss1;
    case LossGroup::kLoss6: return 1.0 - fl.fluor_loss6;
    default: return 1.0;
  }
}

void apply(const TransferMatrix& t, PopulationState& s) {
  Eigen::Matrix<double, 5, 1> v;
  for (int i = 0; i < 5; ++i) v(i) = s.n[i];
  v = t * v;
  for (int i = 0; i < 5; ++i) s.n[i] = v(i);
}

}  // namespace

TransferMatrix build_transfer_optical(const OpticalPumpParams& p) {
  p.validate();
  TransferMatrix t = TransferMatrix::Zero();
  t(kSpin0, kSinglet) = p.p_ts / 2.0;
  t(kSpinPlus, kSinglet) = p.p_ts / 4.0;
  t(kSpinMinus, kSinglet) = p.p_ts / 4.0;
  t(kSinglet, kSpin0) = p.p_st0;
  t(kSinglet, kSpinPlus) = p.p_st1;
  t(kSinglet, kSpinMinus) = p.p_st1;
  for (std::size_t s : {kSpin0, kSpinPlus, kSpinMinus}) t(kNv0, s) = p.p_ion;
  for (std::size_t s : {kSpin0, kSpinPlus, kSpinMinus}) t(s, kNv0) = p.p_recombination / 3.0;
  complete_diagonal(t);
  return t;
}

TransferMatrix build_transfer_dark(const OpticalPumpParams& p) {
  p.validate();
  TransferMatrix t = TransferMatrix::Zero();
  t(kSpin0, kSinglet) = p.p_ts / 2.0;
  t(kSpinPlus, kSinglet) = p.p_ts / 4.0;
  t(kSpinMinus, kSinglet) = p.p_ts / 4.0;
  complete_diagonal(t);
  return t;
}

TransferMatrix build_transfer_mw(int target, double q) {
  if (target != 1 && target != -1) throw InvalidArgument("MW target must be +1 or -1");
  if (!(q >= 0.0 && q <= 1.0)) throw InvalidArgument("flip probability must lie in [0, 1]");
  const std::size_t k = target == 1 ? kSpinPlus : kSpinMinus;
  TransferMatrix t = TransferMatrix::Identity();
  t(kSpin0, kSpin0) = 1.0 - q;
  t(k, k) = 1.0 - q;
  t(kSpin0, k) = q;
  t(k, kSpin0) = q;
  return t;
}

PopulationState apply_mw_rotation(const PopulationState& n, int target, double q) {
  PopulationState out = n;
  apply(build_transfer_mw(target, q), out);
  return out;
}

PopulationState apply_mw_pi(const PopulationState& n, int target, double e_mw) {
  if (!(e_mw >= 0.0 && e_mw <= 1.0)) throw InvalidArgument("E_MW must lie in [0, 1]");
  return apply_mw_rotation(n, target, 1.0 - e_mw);
}

double flip_probability(double rotation_angle_rad) {
  const double s = std::sin(rotation_angle_rad / 2.0);
  return s * s;
}

void PulseTimeline::validate() const {
  if (segments.empty()) throw InvalidArgument("PulseTimeline: at least one segment required");
  if (!(default_mw_error >= 0.0 && default_mw_error <= 1.0))
    throw InvalidArgument("PulseTimeline: default MW error must lie in [0, 1]");
  for (const auto& seg : segments) {
    if (const auto* op = std::get_if<segment::OpticalPump>(&seg)) {
      if (!(op->duration_s > 0.0)) throw InvalidArgument("PulseTimeline: optical pump duration must be > 0");
    } else if (const auto* w = std::get_if<segment::Wait>(&seg)) {
      if (!(w->duration_s > 0.0)) throw InvalidArgument("PulseTimeline: wait duration must be > 0");
    } else if (const auto* mw = std::get_if<segment::MwPi>(&seg)) {
      if (mw->target != 1 && mw->target != -1) throw InvalidArgument("PulseTimeline: MW target must be +1 or -1");
      if (mw->error > 1.0) throw InvalidArgument("PulseTimeline: MW error must lie in [0, 1]");
    } else if (const auto* g = std::get_if<segment::GreenInit>(&seg)) {
      g->reset_to.validate();
    }
  }
}

PulseTimeline spin_init_timeline(const PopulationState& green_mixture, int repeats, double pump_duration_s,
                                 double e_mw) {
  if (repeats < 0) throw InvalidArgument("spin_init_timeline: repeats must be >= 0");
  PulseTimeline t;
  t.default_mw_error = e_mw;
  t.segments.push_back(segment::GreenInit{green_mixture});
  for (int i = 0; i < repeats; ++i) {
    t.segments.push_back(segment::OpticalPump{pump_duration_s});
    t.segments.push_back(segment::MwPi{-1, -1.0});
  }
  return t;
}

double FluorescenceTrace::expected_photons(double binwidth_s) const {
  return std::accumulate(rate_cps.begin(), rate_cps.end(), 0.0) * binwidth_s;
}

std::size_t bins_for(double duration_s, double binwidth_s) {
  const double ratio = duration_s / binwidth_s;
  const double rounded = std::round(ratio);
  if (!(rounded >= 1.0) || std::abs(ratio - rounded) > 1e-6)
    throw InvalidArgument("segment duration must be a positive multiple of the binwidth");
  return static_cast<std::size_t>(rounded);
}

TimelineResult simulate_timeline(const PulseTimeline& timeline, const OpticalPumpParams& pump,
                                 const FluorescenceParams& fl, const PopulationState& init, LossGroup group) {
  timeline.validate();
  fl.validate();
  init.validate();
  const TransferMatrix optical = build_transfer_optical(pump);
  const TransferMatrix dark = build_transfer_dark(pump);
  const Eigen::Matrix<double, 5, 5, Eigen::RowMajor> optical_rm = optical;
  const double scale = loss_scale(fl, group);
  const double f0 = fl.f0_cps * scale;
  const double f1 = fl.f1_cps * scale;
  const auto& k = simd::kernels();

  TimelineResult result;
  PopulationState state = init;
  double clock = 0.0;
  for (const auto& seg : timeline.segments) {
    if (const auto* op = std::get_if<segment::OpticalPump>(&seg)) {
      const std::size_t bins = bins_for(op->duration_s, pump.binwidth_s);
      const std::size_t offset = result.trace.rate_cps.size();
      result.trace.rate_cps.resize(offset + bins);
      result.trace.time_s.resize(offset + bins);
      for (std::size_t b = 0; b < bins; ++b) result.trace.time_s[offset + b] = clock + b * pump.binwidth_s;
      k.propagate_batch(optical_rm.data(), state.n.data(), 1, 1, bins, &f0, &f1,
                        result.trace.rate_cps.data() + offset);
      clock += bins * pump.binwidth_s;
    } else if (const auto* mw = std::get_if<segment::MwPi>(&seg)) {
      const double err = mw->error < 0.0 ? timeline.default_mw_error : mw->error;
      state = apply_mw_pi(state, mw->target, err);
    } else if (const auto* g = std::get_if<segment::GreenInit>(&seg)) {
      state = g->reset_to;
    } else if (const auto* w = std::get_if<segment::Wait>(&seg)) {
      const std::size_t bins = bins_for(w->duration_s, pump.binwidth_s);
      for (std::size_t b = 0; b < bins; ++b) apply(dark, state);
      clock += bins * pump.binwidth_s;
    }
    for (double v : state.n) result.min_population = std::min(result.min_population, v);
  }
  result.final_state = state;
  return result;
}

// ---------------------------------------------------------------------------

std::string_view variant_label(MwVariant v) {
  switch (v) {
    case MwVariant::kNone: return "none";
    case MwVariant::kPiPlus: return "pi+";
    case MwVariant::kPiMinus: return "pi-";
    case MwVariant::kPiPlusPiPlus: return "pi+pi+";
  }
  return "none";
}

MwVariant parse_variant_label(std::string_view label) {
  for (int v = 0; v < kNumVariants; ++v)
    if (variant_label(static_cast<MwVariant>(v)) == label) return static_cast<MwVariant>(v);
  throw DataError("unknown MW variant '" + std::string(label) + "'");
}

LossGroup family_loss_group(int family) {
  switch (family) {
    case 0: return LossGroup::kNone;
    case 1: return LossGroup::kLoss1;
    case 2: return LossGroup::kLoss6;
    default: throw InvalidArgument("family index must be 0, 1 or 2");
  }
}

RateState family_target(int family) {
  if (family < 0 || family >= kNumFamilies) throw InvalidArgument("family index must be 0, 1 or 2");
  return family == 0 ? kSpin0 : kSpinPlus;
}

namespace {

PopulationState variant_start(const RateModel& m, int family, MwVariant variant) {
  const auto& p = m.populations[family];
  // No validate(): during a fit the implied n- may dip slightly below 0.
  PopulationState s = PopulationState::spin_mixture(p[0], p[1], p[2]);
  switch (variant) {
    case MwVariant::kNone: break;
    case MwVariant::kPiPlus: apply(build_transfer_mw(+1, 1.0 - m.e_mw), s); break;
    case MwVariant::kPiMinus: apply(build_transfer_mw(-1, 1.0 - m.e_mw), s); break;
    case MwVariant::kPiPlusPiPlus: {
      const TransferMatrix t = build_transfer_mw(+1, 1.0 - m.e_mw);
      apply(t, s);
      apply(t, s);
      break;
    }
  }
  return s;
}

// Propagates every (family, variant) lane of `lanes` in one batch.
void model_lanes(const RateModel& m, const std::vector<std::pair<int, MwVariant>>& lanes, std::size_t bins,
                 std::vector<double>& out) {
  const Eigen::Matrix<double, 5, 5, Eigen::RowMajor> t = build_transfer_optical(m.pump);
  const std::size_t n = lanes.size();
  std::vector<double> pops(kNumRateStates * n), f0(n), f1(n);
  for (std::size_t l = 0; l < n; ++l) {
    const PopulationState s = variant_start(m, lanes[l].first, lanes[l].second);
    for (std::size_t k = 0; k < kNumRateStates; ++k) pops[k * n + l] = s.n[k];
    const double scale = loss_scale(m.fluorescence, family_loss_group(lanes[l].first));
    f0[l] = m.fluorescence.f0_cps * scale;
    f1[l] = m.fluorescence.f1_cps * scale;
  }
  out.assign(bins * n, 0.0);
  simd::kernels().propagate_batch(t.data(), pops.data(), n, n, bins, f0.data(), f1.data(), out.data());
}

}  // namespace

std::vector<double> model_trace(const RateModel& model, int family, MwVariant variant, std::size_t bins) {
  std::vector<double> out;
  model_lanes(model, {{family, variant}}, bins, out);
  return out;
}

TraceBundle synthesize_bundle(const RateModel& model, std::size_t bins) {
  std::vector<std::pair<int, MwVariant>> lanes;
  for (int f = 0; f < kNumFamilies; ++f)
    for (int v = 0; v < kNumVariants; ++v) lanes.emplace_back(f, static_cast<MwVariant>(v));
  std::vector<double> out;
  model_lanes(model, lanes, bins, out);
  TraceBundle bundle;
  bundle.binwidth_s = model.pump.binwidth_s;
  const std::size_t n = lanes.size();
  for (std::size_t l = 0; l < n; ++l) {
    LabeledTrace t;
    t.family = lanes[l].first;
    t.variant = lanes[l].second;
    t.rate_cps.resize(bins);
    for (std::size_t b = 0; b < bins; ++b) t.rate_cps[b] = out[b * n + l];
    bundle.traces.push_back(std::move(t));
  }
  return bundle;
}

namespace {

constexpr double kMinProbability = 1e-12;
constexpr double kMaxProbability = 0.5;
constexpr double kKcps = 1e3;

struct FitLayout {
  bool fit_ion = true;
  int n_params() const { return (fit_ion ? 4 : 3) + 5 + 2 * kNumFamilies; }
  int f0() const { return fit_ion ? 4 : 3; }
  int pop(int family) const { return f0() + 5 + 2 * family; }
};

std::vector<double> pack(const RateModel& m, const FitLayout& lay) {
  auto lg = [](double p) { return std::log(std::max(p, kMinProbability)); };
  std::vector<double> x;
  x.push_back(lg(m.pump.p_st0));
  x.push_back(lg(m.pump.p_st1));
  x.push_back(lg(m.pump.p_ts));
  if (lay.fit_ion) x.push_back(lg(m.pump.p_ion));
  x.push_back(m.fluorescence.f0_cps / kKcps);
  x.push_back(m.fluorescence.f1_cps / kKcps);
  x.push_back(m.e_mw);
  x.push_back(m.fluorescence.fluor_loss1);
  x.push_back(m.fluorescence.fluor_loss6);
  for (int f = 0; f < kNumFamilies; ++f) {
    x.push_back(m.populations[f][0]);
    x.push_back(m.populations[f][1]);
  }
  return x;
}

RateModel unpack(std::span<const double> x, const RateModel& base, const FitLayout& lay) {
  RateModel m = base;
  int i = 0;
  m.pump.p_st0 = std::exp(x[i++]);
  m.pump.p_st1 = std::exp(x[i++]);
  m.pump.p_ts = std::exp(x[i++]);
  if (lay.fit_ion) m.pump.p_ion = std::exp(x[i++]);
  m.fluorescence.f0_cps = x[i++] * kKcps;
  m.fluorescence.f1_cps = x[i++] * kKcps;
  m.e_mw = x[i++];
  m.fluorescence.fluor_loss1 = x[i++];
  m.fluorescence.fluor_loss6 = x[i++];
  for (int f = 0; f < kNumFamilies; ++f) {
    m.populations[f][0] = x[i++];
    m.populations[f][1] = x[i++];
    m.populations[f][2] = 1.0 - m.populations[f][0] - m.populations[f][1];
  }
  return m;
}

// sigma_T / T from sigma of ln p.
double lifetime_sigma(double p, double sigma_log_p, double binwidth_s) {
  if (p <= 0.0) return 0.0;
  const double t = lifetime_from_probability(p, binwidth_s);
  const double dlnt_dlnp = -p / ((1.0 - p) * std::log1p(-p));
  return t * std::abs(dlnt_dlnp) * sigma_log_p;
}

}  // namespace

GlobalFitResult global_fit(const TraceBundle& bundle, const RateModel& start, const GlobalFitOptions& options) {
  if (bundle.traces.empty()) throw DataError("global_fit: no traces");
  if (!(bundle.binwidth_s > 0.0)) throw DataError("global_fit: binwidth must be positive");
  std::array<bool, kNumFamilies> seen{};
  std::size_t bins = 0;
  std::vector<std::pair<int, MwVariant>> lanes;
  std::vector<double> observed;
  for (const auto& t : bundle.traces) {
    if (t.family < 0 || t.family >= kNumFamilies) throw DataError("global_fit: family index out of range");
    if (t.rate_cps.empty()) throw DataError("global_fit: empty trace");
    for (double v : t.rate_cps)
      if (!std::isfinite(v)) throw DataError("global_fit: non-finite trace sample");
    seen[t.family] = true;
    bins = std::max(bins, t.rate_cps.size());
    lanes.emplace_back(t.family, t.variant);
    observed.insert(observed.end(), t.rate_cps.begin(), t.rate_cps.end());
  }
  for (int f = 0; f < kNumFamilies; ++f)
    if (!seen[f])
      throw SingularSystemError("global_fit: rank deficient, initialization family " + std::to_string(f) +
                                " has no traces");

  FitLayout lay;
  lay.fit_ion = !options.fix_ionization;
  RateModel base = start;
  base.pump.binwidth_s = bundle.binwidth_s;

  const std::size_t n_lanes = lanes.size();
  auto residual_fn = [&](std::span<const double> x, std::span<double> r) {
    const RateModel m = unpack(x, base, lay);
    std::vector<double> out;
    model_lanes(m, lanes, bins, out);
    std::size_t k = 0;
    for (std::size_t l = 0; l < n_lanes; ++l) {
      const auto& obs = bundle.traces[l].rate_cps;
      for (std::size_t b = 0; b < obs.size(); ++b, ++k) r[k] = (out[b * n_lanes + l] - obs[b]) / kKcps;
    }
  };

  LeastSquaresOptions ls;
  ls.max_iterations = options.max_iterations;
  ls.relative_cost_tolerance = options.relative_cost_tolerance;
  const int np = lay.n_params();
  ls.lower_bounds.assign(np, 0.0);
  ls.upper_bounds.assign(np, 1.0);
  ls.typical_scale.assign(np, 0.01);
  const int n_log = lay.fit_ion ? 4 : 3;
  for (int i = 0; i < n_log; ++i) {
    ls.lower_bounds[i] = std::log(kMinProbability);
    ls.upper_bounds[i] = std::log(kMaxProbability);
    ls.typical_scale[i] = 1.0;
  }
  ls.upper_bounds[lay.f0()] = ls.upper_bounds[lay.f0() + 1] = std::numeric_limits<double>::infinity();
  ls.typical_scale[lay.f0()] = ls.typical_scale[lay.f0() + 1] = 1.0;

  const LeastSquaresResult fit = levenberg_marquardt(residual_fn, observed.size(), pack(base, lay), ls);
  if (!fit.converged)
    throw ConvergenceError("global_fit: no convergence after " + std::to_string(fit.iterations) + " iterations");

  GlobalFitResult res;
  res.model = unpack(fit.params, base, lay);
  res.iterations = fit.iterations;
  const auto& se = fit.standard_errors;
  const double bw = bundle.binwidth_s;
  res.sigma.t_st0_s = lifetime_sigma(res.model.pump.p_st0, se[0], bw);
  res.sigma.t_st1_s = lifetime_sigma(res.model.pump.p_st1, se[1], bw);
  res.sigma.t_ts_s = lifetime_sigma(res.model.pump.p_ts, se[2], bw);
  if (lay.fit_ion) res.sigma.t_ion_s = lifetime_sigma(res.model.pump.p_ion, se[3], bw);
  const int f0 = lay.f0();
  res.sigma.f0_cps = se[f0] * kKcps;
  res.sigma.f1_cps = se[f0 + 1] * kKcps;
  res.sigma.e_mw = se[f0 + 2];
  res.sigma.fluor_loss1 = se[f0 + 3];
  res.sigma.fluor_loss6 = se[f0 + 4];
  for (int f = 0; f < kNumFamilies; ++f) {
    const int i = lay.pop(f);
    res.sigma.populations[f][0] = se[i];
    res.sigma.populations[f][1] = se[i + 1];
    if (fit.covariance.size() > 0) {
      const double var = fit.covariance(i, i) + fit.covariance(i + 1, i + 1) + 2.0 * fit.covariance(i, i + 1);
      res.sigma.populations[f][2] = std::sqrt(std::max(var, 0.0));
    } else {
      res.sigma.populations[f][2] = std::numeric_limits<double>::infinity();
    }
    res.spin_fidelity[f] = (1.0 + res.model.populations[f][family_target(f)]) / 2.0;
  }
  std::vector<double> predicted(observed.size());
  for (std::size_t k = 0; k < observed.size(); ++k) predicted[k] = observed[k] + fit.residuals[k] * kKcps;
  res.r_squared = coefficient_of_determination(observed, predicted);
  return res;
}

}  // namespace nvreadout
